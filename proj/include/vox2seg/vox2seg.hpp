#ifndef VOX2SEG_VOX2SEG_HPP
#define VOX2SEG_VOX2SEG_HPP

// Umbrella header: the whole library.

#include "vox2seg/adam.hpp"
#include "vox2seg/augment.hpp"
#include "vox2seg/checkpoint.hpp"
#include "vox2seg/dataset.hpp"
#include "vox2seg/discriminator.hpp"
#include "vox2seg/ensembler.hpp"
#include "vox2seg/generator.hpp"
#include "vox2seg/losses.hpp"
#include "vox2seg/metrics.hpp"
#include "vox2seg/nifti.hpp"
#include "vox2seg/nn.hpp"
#include "vox2seg/phantom.hpp"
#include "vox2seg/postprocess.hpp"
#include "vox2seg/rng.hpp"
#include "vox2seg/run_config.hpp"
#include "vox2seg/tensor.hpp"
#include "vox2seg/trainer.hpp"
#include "vox2seg/volume.hpp"

#endif  // VOX2SEG_VOX2SEG_HPP
