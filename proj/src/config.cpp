#include "bmdg/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "bmdg/errors.hpp"

namespace bmdg {

using nlohmann::json;

namespace {

template <class Obj>
struct Field {
    std::string name;
    std::function<void(Obj&, const json&)> read;
    std::function<void(const Obj&, json&)> write;
};

template <class Obj, class T>
Field<Obj> plain(std::string name, T Obj::*member) {
    return {name,
            [member, name](Obj& o, const json& v) {
                try {
                    o.*member = v.get<T>();
                } catch (const json::exception&) {
                    throw ConfigError("config key '" + name + "' has the wrong type");
                }
            },
            [member, name](const Obj& o, json& j) { j[name] = o.*member; }};
}

template <class Obj>
Obj parse_strict(std::string_view text, const std::vector<Field<Obj>>& fields) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config does not parse: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    Obj obj;
    for (const auto& [key, value] : j.items()) {
        auto it = std::find_if(fields.begin(), fields.end(),
                               [&](const Field<Obj>& f) { return f.name == key; });
        if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
        it->read(obj, value);
    }
    obj.validate();
    return obj;
}

template <class Obj>
std::string dump_fields(const Obj& obj, const std::vector<Field<Obj>>& fields) {
    json j = json::object();
    for (const auto& f : fields) f.write(obj, j);
    return j.dump(2) + "\n";
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::vector<Field<DatasetSpec>>& dataset_fields() {
    static const std::vector<Field<DatasetSpec>> fields = {
        plain("num_identities", &DatasetSpec::num_identities),
        plain("images_per_identity_per_modality", &DatasetSpec::images_per_identity_per_modality),
        plain("image_height", &DatasetSpec::image_height),
        plain("image_width", &DatasetSpec::image_width),
        plain("num_body_parts", &DatasetSpec::num_body_parts),
        plain("noise_level", &DatasetSpec::noise_level),
        plain("seed", &DatasetSpec::seed),
    };
    return fields;
}

template <class E>
Field<TrainConfig> enum_field(std::string name, E TrainConfig::*member,
                              E (*parse)(std::string_view)) {
    return {name,
            [member, name, parse](TrainConfig& c, const json& v) {
                if (!v.is_string()) throw ConfigError("config key '" + name + "' must be a string");
                c.*member = parse(v.get<std::string>());
            },
            [member, name](const TrainConfig& c, json& j) {
                j[name] = std::string(to_string(c.*member));
            }};
}

template <class T>
Field<TrainConfig> weight_field(std::string name, T LossWeights::*member) {
    return {name,
            [member, name](TrainConfig& c, const json& v) {
                if (!v.is_number()) throw ConfigError("config key '" + name + "' must be a number");
                c.weights.*member = v.get<T>();
            },
            [member, name](const TrainConfig& c, json& j) { j[name] = c.weights.*member; }};
}

LowTap parse_low_tap(std::string_view s) {
    if (s == "head") return LowTap::head;
    if (s == "tail1") return LowTap::tail1;
    throw ConfigError("unknown low_tap '" + std::string(s) + "'");
}

const std::vector<Field<TrainConfig>>& train_fields() {
    using C = TrainConfig;
    static const std::vector<Field<C>> fields = {
        plain("K", &C::num_prototypes),
        plain("T", &C::num_steps),
        weight_field("lambda_f", &LossWeights::lambda_f),
        weight_field("lambda_v", &LossWeights::lambda_v),
        weight_field("lambda_c", &LossWeights::lambda_c),
        weight_field("lambda_i", &LossWeights::lambda_i),
        weight_field("lambda_e", &LossWeights::lambda_e),
        weight_field("tau", &LossWeights::tau),
        plain("cc_margin", &C::cc_margin),
        plain("classifier_dropout", &C::classifier_dropout),
        plain("batch_identities", &C::batch_identities),
        plain("batch_positives", &C::batch_positives),
        plain("image_height", &C::image_height),
        plain("image_width", &C::image_width),
        plain("feature_dim", &C::feature_dim),
        plain("low_feature_dim", &C::low_feature_dim),
        plain("embed_dim", &C::embed_dim),
        plain("attention_dim", &C::attention_dim),
        plain("head_width", &C::head_width),
        plain("tail_width", &C::tail_width),
        plain("unet_width", &C::unet_width),
        plain("unet_depth", &C::unet_depth),
        enum_field("low_tap", &C::low_tap, &parse_low_tap),
        plain("epochs", &C::epochs),
        plain("batches_per_epoch", &C::batches_per_epoch),
        plain("lr", &C::lr),
        plain("weight_decay", &C::weight_decay),
        plain("warmup_epochs", &C::warmup_epochs),
        plain("lr_milestones", &C::lr_milestones),
        plain("step_boundaries", &C::step_boundaries),
        plain("seed", &C::seed),
        enum_field("direction", &C::direction, &parse_direction),
        enum_field("mixing", &C::mixing, &parse_mixing_mode),
        plain("crop_pad", &C::crop_pad),
        plain("erase_prob", &C::erase_prob),
        plain("eq_transforms", &C::eq_transforms),
        plain("checkpoint_every", &C::checkpoint_every),
        plain("mmd_every", &C::mmd_every),
        plain("mmd_identities", &C::mmd_identities),
        plain("mmd_images", &C::mmd_images),
    };
    return fields;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

}  // namespace

std::string_view to_string(Direction d) {
    switch (d) {
        case Direction::bidirectional: return "bidirectional";
        case Direction::v_to_i: return "v_to_i";
        case Direction::i_to_v: return "i_to_v";
        case Direction::single_step: return "single_step";
    }
    return "?";
}

std::string_view to_string(MixingMode m) {
    return m == MixingMode::prototype_exchange ? "prototype_exchange" : "whole_mixup";
}

std::string_view to_string(LowTap t) { return t == LowTap::head ? "head" : "tail1"; }

Direction parse_direction(std::string_view s) {
    for (auto d : {Direction::bidirectional, Direction::v_to_i, Direction::i_to_v,
                   Direction::single_step}) {
        if (to_string(d) == s) return d;
    }
    throw ConfigError("unknown direction '" + std::string(s) + "'");
}

MixingMode parse_mixing_mode(std::string_view s) {
    if (s == "prototype_exchange") return MixingMode::prototype_exchange;
    if (s == "whole_mixup") return MixingMode::whole_mixup;
    throw ConfigError("unknown mixing mode '" + std::string(s) + "'");
}

void DatasetSpec::validate() const {
    require(num_identities >= 2, "num_identities must be >= 2");
    require(images_per_identity_per_modality >= 1, "images_per_identity_per_modality must be >= 1");
    require(num_body_parts >= 2, "num_body_parts must be >= 2");
    require(image_height >= 8 && image_width >= 4, "image size too small");
    require(image_height >= num_body_parts * 2, "image_height too small for num_body_parts");
    require(noise_level >= 0.0 && noise_level <= 1.0, "noise_level must lie in [0,1]");
}

void LossWeights::validate() const {
    for (double v : {lambda_f, lambda_v, lambda_c, lambda_i, lambda_e}) {
        require(std::isfinite(v) && v >= 0.0, "loss weights must be finite and nonnegative");
    }
    require(std::isfinite(tau) && tau > 0.0, "tau must be positive");
}

void TrainConfig::validate() const {
    weights.validate();
    require(num_prototypes >= 2, "K must be >= 2");
    require(num_steps >= 0, "T must be >= 0");
    require(batch_identities >= 1 && batch_positives >= 1, "batch shape must be positive");
    require(image_height >= 8 && image_width >= 4, "image size too small");
    for (int v : {feature_dim, low_feature_dim, embed_dim, attention_dim, head_width, tail_width,
                  unet_width}) {
        require(v > 0, "network widths must be positive");
    }
    require(unet_depth >= 0 && unet_depth <= 4, "unet_depth must lie in [0,4]");
    require(epochs >= 1, "epochs must be >= 1");
    require(batches_per_epoch >= 0, "batches_per_epoch must be >= 0");
    require(std::isfinite(lr) && lr > 0.0, "lr must be positive");
    require(weight_decay >= 0.0, "weight_decay must be >= 0");
    require(warmup_epochs >= 0, "warmup_epochs must be >= 0");
    require(cc_margin >= 0.0, "cc_margin must be >= 0");
    require(classifier_dropout >= 0.0 && classifier_dropout < 1.0,
            "classifier_dropout must lie in [0,1)");
    require(crop_pad >= 0, "crop_pad must be >= 0");
    require(erase_prob >= 0.0 && erase_prob <= 1.0, "erase_prob must lie in [0,1]");
    require(checkpoint_every >= 0, "checkpoint_every must be >= 0");
    require(mmd_every >= 0, "mmd_every must be >= 0");
    require(mmd_identities >= 1 && mmd_images >= 1, "mmd sampling sizes must be positive");
    if (!step_boundaries.empty()) {
        require(static_cast<int>(step_boundaries.size()) == num_steps,
                "step_boundaries needs exactly T entries");
        require(std::is_sorted(step_boundaries.begin(), step_boundaries.end()),
                "step_boundaries must be nondecreasing");
        require(step_boundaries.front() == 0, "step_boundaries must start at epoch 0");
    }
    require(std::is_sorted(lr_milestones.begin(), lr_milestones.end()),
            "lr_milestones must be nondecreasing");
    for (const auto& t : eq_transforms) {
        require(t == "identity" || t == "hflip" || t == "translate" || t == "rotate90",
                "unknown eq_transform '" + t + "'");
    }
    require(!eq_transforms.empty(), "eq_transforms must not be empty");
}

std::vector<int> TrainConfig::resolved_milestones() const {
    if (!lr_milestones.empty()) return lr_milestones;
    return {static_cast<int>(std::lround(epochs * 80.0 / 180.0)),
            static_cast<int>(std::lround(epochs * 120.0 / 180.0))};
}

TrainConfig parse_train_config(std::string_view text) { return parse_strict(text, train_fields()); }

TrainConfig load_train_config(const std::filesystem::path& path) {
    return parse_train_config(read_file(path));
}

std::string dump_train_config(const TrainConfig& cfg) { return dump_fields(cfg, train_fields()); }

std::uint64_t config_hash(const TrainConfig& cfg) {
    // FNV-1a over the canonical dump.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : dump_train_config(cfg)) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

DatasetSpec parse_dataset_spec(std::string_view text) { return parse_strict(text, dataset_fields()); }

DatasetSpec load_dataset_spec(const std::filesystem::path& path) {
    return parse_dataset_spec(read_file(path));
}

std::string dump_dataset_spec(const DatasetSpec& spec) { return dump_fields(spec, dataset_fields()); }

}  // namespace bmdg
