#include "bmdg/checkpoint.hpp"

#include <json.hpp>

#include "bmdg/errors.hpp"

namespace bmdg {

namespace {

std::string meta_to_json(const CheckpointMeta& m) {
    nlohmann::json j;
    j["format_version"] = m.format_version;
    j["epochs_completed"] = m.epochs_completed;
    j["step_t"] = m.step_t;
    j["num_classes"] = m.num_classes;
    j["config_hash"] = m.config_hash;
    j["config"] = m.config_json;
    j["rng_sampler"] = m.rng_sampler;
    j["rng_augment"] = m.rng_augment;
    j["rng_mix"] = m.rng_mix;
    return j.dump();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, BmdgModel& model,
                     torch::optim::Optimizer* optimizer, const CheckpointMeta& meta) {
    torch::serialize::OutputArchive archive;
    archive.write("format_version", c10::IValue(meta.format_version));
    archive.write("meta", c10::IValue(meta_to_json(meta)));
    if (meta.torch_rng_state.defined()) archive.write("torch_rng", meta.torch_rng_state);

    torch::serialize::OutputArchive params;
    model->save(params);
    archive.write("model", params);
    if (optimizer) {
        torch::serialize::OutputArchive opt;
        optimizer->save(opt);
        archive.write("optimizer", opt);
    }
    // Write-then-rename so a crash never leaves a truncated checkpoint behind.
    const auto tmp = path.string() + ".tmp";
    archive.save_to(tmp);
    std::filesystem::rename(tmp, path);
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot read checkpoint " + path.string());
    }
    c10::IValue version, meta_json;
    if (!archive.try_read("format_version", version) || !archive.try_read("meta", meta_json)) {
        throw IoError(path.string() + " is not a bmdg checkpoint");
    }
    if (version.toInt() != kCheckpointFormat) {
        throw IoError("unsupported checkpoint format " + std::to_string(version.toInt()));
    }
    const auto j = nlohmann::json::parse(meta_json.toStringRef());
    CheckpointMeta m;
    m.format_version = j.at("format_version").get<std::int64_t>();
    m.epochs_completed = j.at("epochs_completed").get<int>();
    m.step_t = j.at("step_t").get<int>();
    m.num_classes = j.at("num_classes").get<int>();
    m.config_hash = j.at("config_hash").get<std::uint64_t>();
    m.config_json = j.at("config").get<std::string>();
    m.rng_sampler = j.at("rng_sampler").get<std::string>();
    m.rng_augment = j.at("rng_augment").get<std::string>();
    m.rng_mix = j.at("rng_mix").get<std::string>();
    torch::Tensor state;
    if (archive.try_read("torch_rng", state)) m.torch_rng_state = state;
    return m;
}

LoadedModel load_model(const std::filesystem::path& path) {
    LoadedModel out;
    out.meta = read_checkpoint_meta(path);
    out.config = parse_train_config(out.meta.config_json);
    out.model = BmdgModel(out.config, out.meta.num_classes);

    torch::serialize::InputArchive archive, params;
    archive.load_from(path.string());
    archive.read("model", params);
    out.model->load(params);
    return out;
}

void load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer) {
    torch::serialize::InputArchive archive, opt;
    archive.load_from(path.string());
    if (!archive.try_read("optimizer", opt)) throw IoError(path.string() + " has no optimizer state");
    optimizer.load(opt);
}

}  // namespace bmdg
