#include "bmdg/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>
#include <torch/torch.h>

#include "bmdg/errors.hpp"

namespace bmdg {

namespace {

struct BandLook {
    std::array<double, 3> rgb{};
    int texture = 0;  // 0 solid, 1 horizontal stripes, 2 vertical stripes, 3 checker
    int period = 2;
    double contrast = 0.0;
    double width = 0.7;  // fraction of image width
    double weight = 1.0; // relative band height
};

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    const double hh = std::fmod(h, 1.0) * 6.0;
    const int sector = static_cast<int>(hh);
    const double f = hh - sector;
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (sector) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

std::vector<BandLook> identity_look(const DatasetSpec& spec, int identity) {
    Rng rng(splitmix64(spec.seed * 0x100000001b3ULL + static_cast<std::uint64_t>(identity)));
    std::vector<BandLook> bands(spec.num_body_parts);
    for (int b = 0; b < spec.num_body_parts; ++b) {
        auto& band = bands[b];
        band.rgb = hsv_to_rgb(uniform01(rng), uniform(rng, 0.35, 1.0), uniform(rng, 0.3, 1.0));
        band.texture = static_cast<int>(uniform_index(rng, 4));
        band.period = 2 + static_cast<int>(uniform_index(rng, 3));
        band.contrast = uniform(rng, 0.25, 0.55);
        band.width = b == 0 ? uniform(rng, 0.35, 0.5) : uniform(rng, 0.55, 0.9);
        band.weight = (b == 0 ? 0.6 : 1.0) * uniform(rng, 0.9, 1.1);
    }
    return bands;
}

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::string image_name(int identity, Modality m, int index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "images/%04d_%c_%02d.png", identity, modality_code(m), index);
    return buf;
}

Modality parse_modality(const std::string& s) {
    if (s == "V") return Modality::visible;
    if (s == "I") return Modality::infrared;
    throw IoError("bad modality '" + s + "' in manifest");
}

}  // namespace

RenderedPerson render_person(const DatasetSpec& spec, int identity, Modality modality, int index) {
    const int H = spec.image_height, W = spec.image_width;
    const auto bands = identity_look(spec, identity);

    // Visible and infrared draws share geometry streams only through the seed mix.
    std::uint64_t key = spec.seed;
    key = splitmix64(key ^ static_cast<std::uint64_t>(identity));
    key = splitmix64(key ^ (modality == Modality::visible ? 0x56ULL : 0x49ULL));
    key = splitmix64(key ^ static_cast<std::uint64_t>(index));
    Rng rng(key);

    const double scale = uniform(rng, 0.9, 1.05);
    const double dx = uniform(rng, -2.0, 2.0);
    const double dy = uniform(rng, -2.0, 2.0);
    const double illum = uniform(rng, 0.75, 1.15);
    const double gamma = uniform(rng, 0.7, 1.5);
    const auto bg = hsv_to_rgb(uniform01(rng), uniform(rng, 0.0, 0.3), uniform(rng, 0.2, 0.6));

    double total_weight = 0.0;
    for (const auto& b : bands) total_weight += b.weight;
    const double body_h = H * 0.92 * scale;
    const double top = (H - body_h) / 2.0 + dy;
    std::vector<double> cum(bands.size() + 1, 0.0);
    for (std::size_t b = 0; b < bands.size(); ++b) cum[b + 1] = cum[b] + bands[b].weight / total_weight;

    RenderedPerson out{Image(H, W, 3), std::vector<int>(std::size_t(H) * W, -1)};
    const double cx = W / 2.0 + dx;
    for (int y = 0; y < H; ++y) {
        const double rel = (y + 0.5 - top) / body_h;
        int band = -1;
        if (rel >= 0.0 && rel < 1.0) {
            band = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), rel) - cum.begin()) - 1;
            band = std::clamp(band, 0, static_cast<int>(bands.size()) - 1);
        }
        for (int x = 0; x < W; ++x) {
            std::array<double, 3> rgb;
            const double clutter = 0.06 * normal01(rng);
            int label = -1;
            if (band >= 0 && std::abs(x + 0.5 - cx) < bands[band].width * W * scale / 2.0) {
                const auto& look = bands[band];
                const int ly = y - static_cast<int>(std::floor(top + cum[band] * body_h));
                const int lx = x - static_cast<int>(std::floor(cx));
                const int px = ((lx % look.period) + look.period) % look.period;
                const int py = ((ly % look.period) + look.period) % look.period;
                double mod = 0.0;
                switch (look.texture) {
                    case 1: mod = (py * 2 < look.period) ? look.contrast : -look.contrast; break;
                    case 2: mod = (px * 2 < look.period) ? look.contrast : -look.contrast; break;
                    case 3: mod = ((px * 2 < look.period) ^ (py * 2 < look.period)) ? look.contrast
                                                                                      : -look.contrast;
                            break;
                    default: break;
                }
                for (int c = 0; c < 3; ++c) rgb[c] = look.rgb[c] * (1.0 + mod) * illum;
                label = band;
            } else {
                for (int c = 0; c < 3; ++c) rgb[c] = bg[c] + clutter;
            }
            out.band_labels[std::size_t(y) * W + x] = label;

            if (modality == Modality::visible) {
                for (int c = 0; c < 3; ++c) {
                    out.image.at(y, x, c) = to_byte(rgb[c] + 0.5 * spec.noise_level * normal01(rng));
                }
            } else {
                const double lum = std::clamp(0.25 * rgb[0] + 0.45 * rgb[1] + 0.30 * rgb[2], 0.0, 1.0);
                const auto v = to_byte(std::pow(lum, gamma) + spec.noise_level * normal01(rng));
                for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = v;
            }
        }
    }
    return out;
}

DatasetManifest generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

    DatasetManifest manifest{out_dir / "manifest.jsonl", {}};
    for (int id = 0; id < spec.num_identities; ++id) {
        for (Modality m : {Modality::visible, Modality::infrared}) {
            for (int i = 0; i < spec.images_per_identity_per_modality; ++i) {
                ManifestEntry e{image_name(id, m, i), id, m,
                                m == Modality::visible ? 1 + i % 2 : (i % 2 ? 6 : 3)};
                write_png(out_dir / e.image_path, render_person(spec, id, m, i).image);
                manifest.entries.push_back(std::move(e));
            }
        }
    }
    write_manifest(manifest.path, manifest.entries);
    return manifest;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest " + path.string());
    for (const auto& e : entries) {
        nlohmann::json j;
        j["path"] = e.image_path;
        j["identity"] = e.identity;
        j["modality"] = std::string(1, modality_code(e.modality));
        j["camera"] = e.camera;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed writing manifest " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read manifest " + path.string());
    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            entries.push_back({j.at("path").get<std::string>(), j.at("identity").get<int>(),
                               parse_modality(j.at("modality").get<std::string>()),
                               j.at("camera").get<int>()});
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return entries;
}

DatasetManifest sysu_to_manifest(const std::filesystem::path& root,
                                 const std::filesystem::path& manifest_path) {
    namespace fs = std::filesystem;
    struct Raw {
        int pid;
        int camera;
        fs::path file;
    };
    std::vector<Raw> raw;
    std::set<int> pids;
    for (int cam = 1; cam <= 6; ++cam) {
        const fs::path cam_dir = root / ("cam" + std::to_string(cam));
        if (!fs::is_directory(cam_dir)) continue;
        for (const auto& pid_dir : fs::directory_iterator(cam_dir)) {
            if (!pid_dir.is_directory()) continue;
            const int pid = std::stoi(pid_dir.path().filename().string());
            for (const auto& f : fs::directory_iterator(pid_dir.path())) {
                if (f.path().extension() != ".png") continue;
                raw.push_back({pid, cam, f.path()});
                pids.insert(pid);
            }
        }
    }
    std::sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) {
        return std::tie(a.pid, a.camera, a.file) < std::tie(b.pid, b.camera, b.file);
    });
    std::map<int, int> dense;
    for (int pid : pids) dense.emplace(pid, static_cast<int>(dense.size()));

    const fs::path base = fs::absolute(manifest_path).parent_path();
    DatasetManifest manifest{manifest_path, {}};
    for (const auto& r : raw) {
        const bool ir = r.camera == 3 || r.camera == 6;
        manifest.entries.push_back({fs::relative(fs::absolute(r.file), base).generic_string(),
                                    dense.at(r.pid), ir ? Modality::infrared : Modality::visible,
                                    r.camera});
    }
    write_manifest(manifest_path, manifest.entries);
    return manifest;
}

Dataset Dataset::load(const std::filesystem::path& manifest_path) {
    Dataset ds;
    ds.entries_ = read_manifest(manifest_path);
    if (ds.entries_.empty()) throw IoError("manifest " + manifest_path.string() + " is empty");

    int max_id = -1;
    for (const auto& e : ds.entries_) {
        if (e.identity < 0) throw IoError("negative identity in " + manifest_path.string());
        max_id = std::max(max_id, e.identity);
    }
    ds.visible_.assign(max_id + 1, {});
    ds.infrared_.assign(max_id + 1, {});
    for (std::size_t i = 0; i < ds.entries_.size(); ++i) {
        const auto& e = ds.entries_[i];
        (e.modality == Modality::visible ? ds.visible_ : ds.infrared_)[e.identity].push_back(i);
    }
    for (int id = 0; id <= max_id; ++id) {
        if (ds.visible_[id].empty() || ds.infrared_[id].empty()) throw CoverageError(id);
    }

    const auto base = manifest_path.parent_path();
    ds.images_.reserve(ds.entries_.size());
    for (const auto& e : ds.entries_) {
        ds.images_.push_back(read_png(base / e.image_path));
        const auto& img = ds.images_.back();
        if (ds.images_.size() == 1) {
            ds.height_ = img.height;
            ds.width_ = img.width;
        } else if (img.height != ds.height_ || img.width != ds.width_) {
            throw ShapeError("image " + e.image_path + " does not match the dataset image size");
        }
    }
    return ds;
}

std::size_t Dataset::count(Modality m) const {
    std::size_t n = 0;
    for (const auto& v : (m == Modality::visible ? visible_ : infrared_)) n += v.size();
    return n;
}

torch::Tensor Dataset::stack(const std::vector<std::size_t>& entries) const {
    auto out = torch::empty({static_cast<int64_t>(entries.size()), 3, height_, width_});
    for (std::size_t i = 0; i < entries.size(); ++i) out[i].copy_(image_to_tensor(images_[entries[i]]));
    return out;
}

Batch sample_batch(const Dataset& dataset, int num_identities, int positives, Rng& rng) {
    if (num_identities < 1 || positives < 1) throw PreconditionError("batch shape must be positive");
    if (num_identities > dataset.num_identities()) {
        throw PreconditionError("batch asks for " + std::to_string(num_identities) +
                                " identities but the dataset has " +
                                std::to_string(dataset.num_identities()));
    }
    std::vector<int> ids(dataset.num_identities());
    for (int i = 0; i < dataset.num_identities(); ++i) ids[i] = i;
    shuffle(std::span<int>(ids), rng);
    ids.resize(num_identities);

    auto pick = [&](const std::vector<std::size_t>& pool, std::vector<std::size_t>& out) {
        if (static_cast<int>(pool.size()) >= positives) {
            std::vector<std::size_t> copy = pool;
            shuffle(std::span<std::size_t>(copy), rng);
            out.insert(out.end(), copy.begin(), copy.begin() + positives);
        } else {
            for (int p = 0; p < positives; ++p) out.push_back(pool[uniform_index(rng, pool.size())]);
        }
    };

    Batch batch;
    std::vector<int64_t> labels;
    for (int id : ids) {
        pick(dataset.indices(id, Modality::visible), batch.entries_v);
        pick(dataset.indices(id, Modality::infrared), batch.entries_i);
        labels.insert(labels.end(), positives, id);
    }
    batch.images_v = dataset.stack(batch.entries_v);
    batch.images_i = dataset.stack(batch.entries_i);
    batch.labels = torch::tensor(labels, torch::kInt64);
    return batch;
}

}  // namespace bmdg
