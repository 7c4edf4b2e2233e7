#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <torch/types.h>

#include "bmdg/config.hpp"
#include "bmdg/image.hpp"
#include "bmdg/rng.hpp"

namespace bmdg {

struct ManifestEntry {
    std::string image_path;  // relative to the manifest's directory
    int identity = 0;
    Modality modality = Modality::visible;
    int camera = 0;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::filesystem::path path;
    std::vector<ManifestEntry> entries;
};

// One rendered sample plus its ground-truth band map (-1 = background).
struct RenderedPerson {
    Image image;
    std::vector<int> band_labels;  // H*W, row-major
};

// Deterministic renderer behind generate_dataset; exposed for mask-quality tests.
RenderedPerson render_person(const DatasetSpec& spec, int identity, Modality modality, int index);

// Writes images/ and manifest.jsonl under out_dir.
DatasetManifest generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

// One JSON record per line: {"camera":..,"identity":..,"modality":"V"|"I","path":..}.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Converts a SYSU-MM01-style tree (cam<k>/<pid>/<name>.png, cameras 3 and 6 infrared)
// into a manifest at manifest_path. Person ids are relabelled densely in sorted order.
DatasetManifest sysu_to_manifest(const std::filesystem::path& root,
                                 const std::filesystem::path& manifest_path);

class Dataset {
public:
    // Loads all images; throws CoverageError / IoError / ShapeError.
    static Dataset load(const std::filesystem::path& manifest_path);

    int num_identities() const { return static_cast<int>(visible_.size()); }
    int image_height() const { return height_; }
    int image_width() const { return width_; }
    std::size_t size() const { return entries_.size(); }
    const std::vector<ManifestEntry>& entries() const { return entries_; }
    const Image& image(std::size_t entry) const { return images_[entry]; }

    // Entry indices for (identity, modality).
    const std::vector<std::size_t>& indices(int identity, Modality m) const {
        return m == Modality::visible ? visible_[identity] : infrared_[identity];
    }
    std::size_t count(Modality m) const;

    // Stacked [N,3,H,W] float tensor for the given entries.
    torch::Tensor stack(const std::vector<std::size_t>& entries) const;

private:
    std::vector<ManifestEntry> entries_;
    std::vector<Image> images_;
    std::vector<std::vector<std::size_t>> visible_;
    std::vector<std::vector<std::size_t>> infrared_;
    int height_ = 0;
    int width_ = 0;
};

inline Dataset load_manifest(const std::filesystem::path& path) { return Dataset::load(path); }

// Identity-balanced cross-modal batch. Row j of images_v and images_i share an identity.
struct Batch {
    torch::Tensor images_v;     // [Nb*Np,3,H,W]
    torch::Tensor images_i;     // [Nb*Np,3,H,W]
    torch::Tensor labels;       // [Nb*Np] int64
    std::vector<std::size_t> entries_v;
    std::vector<std::size_t> entries_i;
};

Batch sample_batch(const Dataset& dataset, int num_identities, int positives, Rng& rng);

}  // namespace bmdg
