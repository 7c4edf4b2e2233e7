#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "bmdg/errors.hpp"
#include "bmdg/synthdata.hpp"
#include "helpers.hpp"

using namespace bmdg;
using bmdg::testing::scratch;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

DatasetSpec small_spec() {
    DatasetSpec spec;
    spec.num_identities = 3;
    spec.images_per_identity_per_modality = 2;
    return spec;
}

// Mean over pixels of the variance across the three channels.
double cross_channel_variance(const Image& img) {
    double total = 0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double m = 0, s = 0;
            for (int c = 0; c < 3; ++c) m += img.at(y, x, c) / 3.0;
            for (int c = 0; c < 3; ++c) s += (img.at(y, x, c) - m) * (img.at(y, x, c) - m) / 3.0;
            total += s;
        }
    }
    return total / (img.height * img.width);
}

}  // namespace

TEST_SUITE("synthdata") {

TEST_CASE("generation is byte-identical for the same seed") {
    auto a = generate_dataset(small_spec(), scratch("gen_a"));
    auto b = generate_dataset(small_spec(), scratch("gen_b"));
    CHECK(slurp(a.path) == slurp(b.path));
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(slurp(a.path.parent_path() / a.entries[i].image_path) ==
              slurp(b.path.parent_path() / b.entries[i].image_path));
    }
    auto spec = small_spec();
    spec.seed = 8;
    auto c = generate_dataset(spec, scratch("gen_c"));
    CHECK(slurp(c.path.parent_path() / c.entries[0].image_path) != slurp(a.path.parent_path() / a.entries[0].image_path));
}

TEST_CASE("20 identities x 10 images gives 400 entries") {
    DatasetSpec spec;
    spec.num_identities = 20;
    spec.images_per_identity_per_modality = 10;
    auto m = generate_dataset(spec, scratch("gen_400"));
    CHECK(m.entries.size() == 400);
    auto ds = load_manifest(m.path);
    CHECK(ds.num_identities() == 20);
    CHECK(ds.count(Modality::visible) == 200);
    CHECK(ds.count(Modality::infrared) == 200);
    CHECK(ds.image_height() == spec.image_height);
    CHECK(ds.image_width() == spec.image_width);
}

TEST_CASE("infrared rendering collapses the channels") {
    DatasetSpec spec;
    spec.num_identities = 6;
    spec.images_per_identity_per_modality = 5;
    double v = 0, ir = 0;
    int nv = 0, ni = 0;
    for (int id = 0; id < spec.num_identities; ++id) {
        for (int k = 0; k < spec.images_per_identity_per_modality; ++k) {
            v += cross_channel_variance(render_person(spec, id, Modality::visible, k).image), ++nv;
            ir += cross_channel_variance(render_person(spec, id, Modality::infrared, k).image), ++ni;
        }
    }
    CHECK(ir / ni < v / nv);
    CHECK(ir / ni == doctest::Approx(0.0));
}

TEST_CASE("rendered band labels cover every body part") {
    auto spec = small_spec();
    auto r = render_person(spec, 1, Modality::visible, 0);
    CHECK(r.band_labels.size() == static_cast<std::size_t>(spec.image_height * spec.image_width));
    std::set<int> seen(r.band_labels.begin(), r.band_labels.end());
    for (int b = 0; b < spec.num_body_parts; ++b) CHECK(seen.count(b) == 1);
}

TEST_CASE("manifest round-trip is byte-identical") {
    auto m = generate_dataset(small_spec(), scratch("roundtrip"));
    auto entries = read_manifest(m.path);
    CHECK((entries == m.entries));
    auto again = m.path.parent_path() / "again.jsonl";
    write_manifest(again, entries);
    CHECK(slurp(again) == slurp(m.path));
}

TEST_CASE("missing infrared images for identity 3 is a coverage error") {
    auto spec = small_spec();
    spec.num_identities = 5;
    auto m = generate_dataset(spec, scratch("coverage"));
    std::vector<ManifestEntry> kept;
    for (const auto& e : m.entries) {
        if (!(e.identity == 3 && e.modality == Modality::infrared)) kept.push_back(e);
    }
    write_manifest(m.path, kept);
    try {
        load_manifest(m.path);
        FAIL("expected CoverageError");
    } catch (const CoverageError& e) {
        CHECK(std::string(e.what()).find("identity 3") != std::string::npos);
    }
}

TEST_CASE("unreadable image is an I/O error naming the path") {
    auto m = generate_dataset(small_spec(), scratch("unreadable"));
    fs::remove(m.path.parent_path() / m.entries[2].image_path);
    try {
        load_manifest(m.path);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find(fs::path(m.entries[2].image_path).filename().string()) != std::string::npos);
    }
}

TEST_CASE("SYSU-style tree converts to a manifest that loads like the native one") {
    auto spec = small_spec();
    auto native = generate_dataset(spec, scratch("sysu_native"));
    auto root = scratch("sysu_tree");
    // cameras 1,2 visible and 3,6 infrared; person ids are sparse (100 + 7 * id)
    for (std::size_t n = 0; n < native.entries.size(); ++n) {
        const auto& e = native.entries[n];
        const int cam = e.modality == Modality::visible ? 1 + (e.camera == 2) : (e.camera == 6 ? 6 : 3);
        auto dir = root / ("cam" + std::to_string(cam)) / std::to_string(100 + 7 * e.identity);
        fs::create_directories(dir);
        fs::copy_file(native.path.parent_path() / e.image_path, dir / (std::to_string(n) + ".png"));
    }
    auto converted = sysu_to_manifest(root, root / "manifest.jsonl");
    auto a = load_manifest(native.path);
    auto b = load_manifest(converted.path);
    CHECK(a.num_identities() == b.num_identities());
    CHECK(a.count(Modality::visible) == b.count(Modality::visible));
    CHECK(a.count(Modality::infrared) == b.count(Modality::infrared));
    // Same images per (identity, modality), compared as pixel multisets.
    for (int id = 0; id < a.num_identities(); ++id) {
        for (auto m : {Modality::visible, Modality::infrared}) {
            std::multiset<std::vector<std::uint8_t>> pa, pb;
            for (auto i : a.indices(id, m)) pa.insert(a.image(i).pixels);
            for (auto i : b.indices(id, m)) pb.insert(b.image(i).pixels);
            CHECK(pa == pb);
        }
    }
}

TEST_CASE("batches are identity balanced and deterministic") {
    auto ds = load_manifest(bmdg::testing::tiny_manifest());
    Rng r1(5), r2(5);
    auto a = sample_batch(ds, 3, 2, r1);
    auto b = sample_batch(ds, 3, 2, r2);
    CHECK(a.entries_v == b.entries_v);
    CHECK(a.entries_i == b.entries_i);
    CHECK(torch::equal(a.labels, b.labels));
    CHECK(a.images_v.size(0) == 6);
    CHECK(a.images_i.size(0) == 6);
    std::set<int64_t> ids;
    for (int64_t j = 0; j < 6; ++j) {
        const auto y = a.labels[j].item<int64_t>();
        ids.insert(y);
        CHECK(ds.entries()[a.entries_v[j]].identity == y);
        CHECK(ds.entries()[a.entries_i[j]].identity == y);
        CHECK(ds.entries()[a.entries_v[j]].modality == Modality::visible);
        CHECK(ds.entries()[a.entries_i[j]].modality == Modality::infrared);
    }
    CHECK(ids.size() == 3);
}

TEST_CASE("batch shapes: 10x8 and 1x1") {
    DatasetSpec spec;
    spec.num_identities = 10;
    spec.images_per_identity_per_modality = 3;  // fewer than 8: sampled with replacement
    auto ds = load_manifest(generate_dataset(spec, scratch("batch_10x8")).path);
    Rng rng(1);
    auto b = sample_batch(ds, 10, 8, rng);
    CHECK(b.images_v.size(0) == 80);
    CHECK(b.images_i.size(0) == 80);
    auto one = sample_batch(ds, 1, 1, rng);
    CHECK(one.images_v.size(0) == 1);
    CHECK(ds.entries()[one.entries_v[0]].identity == ds.entries()[one.entries_i[0]].identity);
    CHECK_THROWS_AS(sample_batch(ds, 11, 1, rng), PreconditionError);
}

}
