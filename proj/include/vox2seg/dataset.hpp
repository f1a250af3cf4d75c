#ifndef VOX2SEG_DATASET_HPP
#define VOX2SEG_DATASET_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vox2seg/nifti.hpp"
#include "vox2seg/phantom.hpp"
#include "vox2seg/rng.hpp"
#include "vox2seg/tensor.hpp"
#include "vox2seg/volume.hpp"

namespace vox2seg {

namespace fs = std::filesystem;

namespace dataset_detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

/// Strip .nii / .nii.gz and return the remaining stem, lowercased.
inline std::optional<std::string> volume_stem(const fs::path& p) {
    std::string name = lower(p.filename().string());
    for (const char* ext : {".nii.gz", ".nii"}) {
        const std::string e(ext);
        if (name.size() > e.size() && name.compare(name.size() - e.size(), e.size(), e) == 0)
            return name.substr(0, name.size() - e.size());
    }
    return std::nullopt;
}

inline bool stem_has_tag(const std::string& stem, const std::string& tag) {
    if (stem == tag) return true;
    const std::string suffix = "_" + tag;
    return stem.size() > suffix.size() &&
           stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// Channel index for a filename, or -1. Checks longer tags first so "_t1"
/// does not swallow "_t1gd"/"_t1ce".
inline int channel_of_stem(const std::string& stem) {
    if (stem_has_tag(stem, "flair")) return 3;
    if (stem_has_tag(stem, "t1gd") || stem_has_tag(stem, "t1ce")) return 1;
    if (stem_has_tag(stem, "t2")) return 2;
    if (stem_has_tag(stem, "t1")) return 0;
    return -1;
}

inline bool is_label_stem(const std::string& stem) { return stem_has_tag(stem, "seg"); }

}  // namespace dataset_detail

/// Load a 4-channel volume either from a single 4D file or from a directory
/// holding one file per modality (suffixes t1 / t1gd-or-t1ce / t2 / flair).
template <typename T>
MultiModalVolume<T> load_volume(const fs::path& path) {
    using namespace dataset_detail;
    if (fs::is_regular_file(path)) {
        auto vol = read_nifti<T>(path.string());
        if (vol.data.rank() != 4 || vol.data.dim(0) != kNumChannels)
            throw std::runtime_error("channel-count mismatch: expected 4 channels in " +
                                     path.string());
        return std::move(vol.data);
    }
    if (!fs::is_directory(path)) throw std::runtime_error("missing file: " + path.string());

    std::map<int, fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
        if (!entry.is_regular_file()) continue;
        auto stem = volume_stem(entry.path());
        if (!stem) continue;
        const int ch = channel_of_stem(*stem);
        if (ch >= 0) files[ch] = entry.path();
    }
    for (int ch = 0; ch < kNumChannels; ++ch)
        if (!files.count(ch))
            throw std::runtime_error("missing " + std::string(kChannelNames[ch]) + " file in " +
                                     path.string());

    MultiModalVolume<T> out;
    for (int ch = 0; ch < kNumChannels; ++ch) {
        auto vol = read_nifti<T>(files[ch].string());
        if (vol.data.rank() != 3)
            throw std::runtime_error("expected single-channel volume: " + files[ch].string());
        if (ch == 0) {
            out = MultiModalVolume<T>({kNumChannels, vol.data.dim(0), vol.data.dim(1), vol.data.dim(2)});
        } else if (vol.data.dim(0) != out.dim(1) || vol.data.dim(1) != out.dim(2) ||
                   vol.data.dim(2) != out.dim(3)) {
            throw std::runtime_error("shape mismatch across channels in " + path.string());
        }
        std::copy_n(vol.data.data(), vol.data.numel(), out.data() + ch * vol.data.numel());
    }
    return out;
}

inline LabelMap load_label_map(const fs::path& path) {
    auto vol = read_nifti<std::uint8_t>(path.string());
    if (vol.data.rank() != 3)
        throw std::runtime_error("expected a 3D label map: " + path.string());
    validate_label_map(vol.data);
    return std::move(vol.data);
}

/// One training/evaluation subject held in memory.
template <typename T>
struct Subject {
    std::string id;
    MultiModalVolume<T> image;  // raw intensities (normalize before use)
    LabelMap labels;
};

/// Write `count` phantom subjects under root/<id>/{t1,t1gd,t2,flair,seg}.nii.gz
/// plus a manifest listing each subject's generation seed. Returns the ids.
inline std::vector<std::string> write_phantom_dataset(const fs::path& root, int count,
                                                      const PhantomSpec& base,
                                                      std::uint64_t seed) {
    fs::create_directories(root);
    std::ofstream manifest(root / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot write manifest in " + root.string());
    std::vector<std::string> ids;
    for (int i = 0; i < count; ++i) {
        PhantomSpec spec = base;
        spec.seed = derive_seed(seed, 0x9fa117u, static_cast<std::uint64_t>(i));
        auto [vol, labels] = generate_phantom<float>(spec);
        std::ostringstream name;
        name << "subj_" << std::setw(3) << std::setfill('0') << i;
        const fs::path dir = root / name.str();
        fs::create_directories(dir);
        const std::int64_t n = labels.numel();
        for (int ch = 0; ch < kNumChannels; ++ch) {
            Tensor<float> channel({labels.dim(0), labels.dim(1), labels.dim(2)});
            std::copy_n(vol.data() + ch * n, n, channel.data());
            write_nifti(
                (dir / (std::string(kChannelNames[ch]) + ".nii.gz")).string(), channel);
        }
        write_nifti((dir / "seg.nii.gz").string(), labels);
        manifest << name.str() << ' ' << spec.seed << '\n';
        ids.push_back(name.str());
    }
    return ids;
}

inline std::vector<std::string> list_subjects(const fs::path& root) {
    std::vector<std::string> ids;
    std::ifstream manifest(root / "manifest.txt");
    if (manifest) {
        std::string id;
        std::uint64_t seed;
        while (manifest >> id >> seed) ids.push_back(id);
    } else {
        if (!fs::is_directory(root)) throw std::runtime_error("dataset not found: " + root.string());
        for (const auto& entry : fs::directory_iterator(root))
            if (entry.is_directory()) ids.push_back(entry.path().filename().string());
        std::sort(ids.begin(), ids.end());
    }
    if (ids.empty()) throw std::runtime_error("dataset has no subjects: " + root.string());
    return ids;
}

template <typename T>
Subject<T> load_subject(const fs::path& root, const std::string& id) {
    Subject<T> s;
    s.id = id;
    s.image = load_volume<T>(root / id);
    s.labels = load_label_map(root / id / "seg.nii.gz");
    const Shape& is = s.image.shape();
    if (is[1] != s.labels.dim(0) || is[2] != s.labels.dim(1) || is[3] != s.labels.dim(2))
        throw std::runtime_error("image/label shape mismatch for subject " + id);
    return s;
}

template <typename T>
std::vector<Subject<T>> load_dataset(const fs::path& root) {
    std::vector<Subject<T>> out;
    for (const auto& id : list_subjects(root)) out.push_back(load_subject<T>(root, id));
    return out;
}

}  // namespace vox2seg

#endif  // VOX2SEG_DATASET_HPP
