#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "bmdg/checkpoint.hpp"
#include "bmdg/config.hpp"
#include "bmdg/errors.hpp"
#include "bmdg/eval.hpp"
#include "bmdg/miverify.hpp"
#include "bmdg/plot.hpp"
#include "bmdg/synthdata.hpp"
#include "bmdg/trainer.hpp"

namespace fs = std::filesystem;
using namespace bmdg;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

const char* kFooter = R"(Exit codes: 0 ok, 1 runtime failure, 2 usage or config error.

train writes under --out:
  resolved-config.json   every effective config value; pass it back to --config to rerun
  run.log                config echo and per-epoch summary
  metrics.csv            one row per batch:
                         epoch,step_t,batch,lr,L_re,L_bce,L_bcc,L_lc,L_hc,L_vc,L_c,L_p,L_eq,total
                         (epoch is 0-based; step_t is the mixing step, 0 for the single-step baseline)
  mmd.csv                epoch,step_t,mmd  (center distance of L2-normalized V and I embeddings)
  checkpoints/epoch_NNN.pt, checkpoint_last.pt

eval prints one CSV row:
  direction,protocol,R1,R5,R10,R20,mAP,queries,excluded)";

// Config problems are usage errors even when they surface as I/O.
TrainConfig read_config(const std::string& path) {
    try {
        return path.empty() ? TrainConfig{} : load_train_config(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
}

int gen_data(const std::string& spec_path, const std::string& out, std::int64_t seed) {
    DatasetSpec spec;
    if (!spec_path.empty()) {
        try {
            spec = load_dataset_spec(spec_path);
        } catch (const IoError& e) {
            throw ConfigError(e.what());
        }
    }
    if (seed >= 0) spec.seed = static_cast<std::uint64_t>(seed);
    spec.validate();
    auto manifest = generate_dataset(spec, out);
    std::cout << "wrote " << manifest.entries.size() << " images, manifest " << manifest.path.string() << '\n';
    return 0;
}

int train_cmd(const std::string& config, const std::string& data, const std::string& out, const std::string& resume) {
    auto cfg = read_config(config);
    auto dataset = load_manifest(data);
    Trainer trainer(cfg, dataset, out);
    if (!resume.empty()) trainer.resume(resume);
    std::cout << "config\n" << dump_train_config(trainer.config()) << '\n';
    auto last = trainer.run();
    std::cout << "trained " << trainer.epochs_completed() << " epochs, checkpoint " << last.string() << '\n';
    return 0;
}

int eval_cmd(const std::string& checkpoint, const std::string& data, const std::string& direction,
             const std::string& protocol, std::uint64_t seed, bool header) {
    auto loaded = load_model(checkpoint);
    auto dataset = load_manifest(data);
    EvalOptions opts;
    opts.protocol = protocol == "single" ? Protocol::single_shot : Protocol::multi_shot;
    opts.seed = seed;
    const auto dir = direction == "v2i" ? SearchDirection::v2i : SearchDirection::i2v;
    auto r = evaluate_model(loaded.model, dataset, dir, opts);

    if (header) std::cout << "direction,protocol,R1,R5,R10,R20,mAP,queries,excluded\n";
    std::cout << std::fixed << std::setprecision(4) << to_string(dir) << ',' << to_string(opts.protocol);
    for (double v : r.rank) std::cout << ',' << v;
    std::cout << ',' << r.mAP << ',' << r.queries_evaluated << ',' << r.queries_excluded << '\n';
    std::cerr << std::setprecision(2) << to_string(dir) << " " << to_string(opts.protocol) << "-shot: R1 " << r.rank[0]
              << "  R5 " << r.rank[1] << "  R10 " << r.rank[2] << "  R20 " << r.rank[3] << "  mAP " << r.mAP
              << "  (" << r.queries_evaluated << " queries";
    if (r.queries_excluded > 0) std::cerr << ", " << r.queries_excluded << " excluded: identity not in gallery";
    std::cerr << ")\n";
    return 0;
}

int verify_cmd(int trials, std::uint64_t seed) {
    auto s = run_verification(trials, seed);
    std::cout << s.report();
    return s.passed ? 0 : kRuntimeFailure;
}

int plot_cmd(const std::string& checkpoint, const std::string& data, const std::string& out,
             const std::vector<std::string>& mmd_files, int identities) {
    fs::create_directories(out);
    if (!checkpoint.empty()) {
        if (data.empty()) throw ConfigError("plot --checkpoint needs --data");
        auto loaded = load_model(checkpoint);
        auto dataset = load_manifest(data);
        std::vector<std::size_t> entries;
        std::vector<int> labels;
        std::vector<char> modality;
        for (auto m : {Modality::visible, Modality::infrared}) {
            for (int id = 0; id < std::min(identities, dataset.num_identities()); ++id) {
                for (auto e : dataset.indices(id, m)) {
                    entries.push_back(e);
                    labels.push_back(id);
                    modality.push_back(modality_code(m));
                }
            }
        }
        std::vector<torch::Tensor> parts;
        std::size_t begin = 0;
        for (auto m : {Modality::visible, Modality::infrared}) {
            std::vector<std::size_t> sub;
            for (std::size_t j = begin; j < entries.size() && modality[j] == modality_code(m); ++j) sub.push_back(entries[j]);
            begin += sub.size();
            parts.push_back(loaded.model->embed_images(dataset.stack(sub), m));
        }
        auto emb = torch::nn::functional::normalize(torch::cat(parts, 0),
                                                    torch::nn::functional::NormalizeFuncOptions().dim(1));
        auto proj = project_2d(emb);
        write_projection_csv(fs::path(out) / "projection.csv", proj, labels, modality);
        write_png(fs::path(out) / "projection.png", scatter_plot(proj.coords, labels, modality));

        torch::NoGradGuard guard;
        loaded.model->eval();
        const auto first_v = dataset.indices(0, Modality::visible).front();
        const auto first_i = dataset.indices(0, Modality::infrared).front();
        for (auto [entry, m, name] : {std::tuple{first_v, Modality::visible, "masks_V.png"},
                                      std::tuple{first_i, Modality::infrared, "masks_I.png"}}) {
            auto f = loaded.model->forward(dataset.stack({entry}), m);
            write_png(fs::path(out) / name, mask_panel(dataset.image(entry), f.masks, 0));
        }
        std::cout << "wrote projection.csv, projection.png, masks_V.png, masks_I.png\n";
    }
    if (!mmd_files.empty()) {
        std::vector<Series> series;
        for (const auto& f : mmd_files) series.push_back(read_mmd_csv(f, fs::path(f).parent_path().filename().string()));
        write_png(fs::path(out) / "mmd.png", line_plot(series));
        std::cout << "wrote mmd.png (" << series.size() << " curves, colours in argument order)\n";
    }
    if (checkpoint.empty() && mmd_files.empty()) throw ConfigError("plot needs --checkpoint and/or --mmd");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bidirectional multi-step domain generalization for visible-infrared re-identification"};
    app.footer(kFooter);
    app.require_subcommand(1);

    std::string spec_path, out, config, data, resume, checkpoint, direction = "i2v", protocol = "multi";
    std::int64_t data_seed = -1;
    std::uint64_t seed = 1;
    int trials = 100, identities = 10;
    bool header = false;
    std::vector<std::string> mmd_files;

    auto* gen = app.add_subcommand("gen-data", "render a synthetic V/I dataset and its manifest");
    gen->add_option("--spec", spec_path, "dataset spec (JSON)")->check(CLI::ExistingFile);
    gen->add_option("--out", out, "output directory")->required();
    gen->add_option("--seed", data_seed, "override the spec seed");

    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--config", config, "train config (JSON, unknown keys rejected)");
    tr->add_option("--data", data, "manifest.jsonl")->required()->check(CLI::ExistingFile);
    tr->add_option("--out", out, "run directory")->required();
    tr->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

    auto* ev = app.add_subcommand("eval", "cross-modal retrieval metrics");
    ev->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    ev->add_option("--data", data, "manifest.jsonl")->required()->check(CLI::ExistingFile);
    ev->add_option("--direction", direction)->check(CLI::IsMember({"v2i", "i2v"}));
    ev->add_option("--protocol", protocol)->check(CLI::IsMember({"single", "multi"}));
    ev->add_option("--seed", seed, "single-shot gallery draws");
    ev->add_flag("--header", header, "print the CSV header first");

    auto* mi = app.add_subcommand("verify-mi", "brute-force check of the mutual-information bounds");
    mi->add_option("--trials", trials)->check(CLI::NonNegativeNumber);
    mi->add_option("--seed", seed);

    auto* pl = app.add_subcommand("plot", "projection scatter, mask panels, modality-gap curves");
    pl->add_option("--checkpoint", checkpoint)->check(CLI::ExistingFile);
    pl->add_option("--data", data)->check(CLI::ExistingFile);
    pl->add_option("--mmd", mmd_files, "mmd.csv files from training runs")->check(CLI::ExistingFile);
    pl->add_option("--identities", identities, "identities in the scatter");
    pl->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageError;
    }

    try {
        if (*gen) return gen_data(spec_path, out, data_seed);
        if (*tr) return train_cmd(config, data, out, resume);
        if (*ev) return eval_cmd(checkpoint, data, direction, protocol, seed, header);
        if (*mi) return verify_cmd(trials, seed);
        if (*pl) return plot_cmd(checkpoint, data, out, mmd_files, identities);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeFailure;
    }
    return kUsageError;
}
