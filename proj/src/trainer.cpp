#include "bmdg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <ATen/CPUGeneratorImpl.h>
#include <json.hpp>

#include "bmdg/checkpoint.hpp"
#include "bmdg/errors.hpp"
#include "bmdg/eval.hpp"

namespace bmdg {

namespace F = torch::nn::functional;

namespace {

double scalar(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

torch::Tensor torch_rng_state() { return at::detail::getDefaultCPUGenerator().get_state(); }

void set_torch_rng_state(const torch::Tensor& state) {
    auto gen = at::detail::getDefaultCPUGenerator();
    std::lock_guard<std::mutex> lock(gen.mutex());
    gen.set_state(state);
}

// Engines are decorrelated from one config seed.
Rng make_rng(std::uint64_t seed, std::uint64_t stream) { return Rng(splitmix64(seed * 0x100 + stream)); }

std::string describe(const TermValues& v) {
    std::ostringstream os;
    os << std::setprecision(9) << "L_re=" << v.re << " L_bce=" << v.bce << " L_bcc=" << v.bcc
       << " L_lc=" << v.lc << " L_hc=" << v.hc << " L_vc=" << v.vc << " L_c=" << v.c << " L_p=" << v.p
       << " L_eq=" << v.eq << " total=" << v.total;
    return os.str();
}

}  // namespace

TermValues Objective::values() const {
    TermValues v;
    v.re = scalar(terms.re);
    v.bce = scalar(reid.bce);
    v.bcc = scalar(reid.bcc);
    v.lc = scalar(terms.lc);
    v.hc = scalar(terms.hc);
    v.vc = scalar(terms.vc);
    v.c = scalar(terms.c);
    v.p = scalar(terms.p);
    v.eq = scalar(terms.eq);
    v.total = scalar(total);
    return v;
}

Trainer::Trainer(TrainConfig cfg, const Dataset& data, std::filesystem::path out_dir)
    : cfg_(std::move(cfg)),
      data_(data),
      out_dir_(std::move(out_dir)),
      schedule_(StepSchedule::from_config(cfg_)),
      sampler_(make_rng(cfg_.seed, 1)),
      augment_(make_rng(cfg_.seed, 2)),
      mix_(make_rng(cfg_.seed, 3)) {
    cfg_.validate();
    if (data.image_height() != cfg_.image_height || data.image_width() != cfg_.image_width) {
        throw ConfigError("dataset images are " + std::to_string(data.image_height()) + "x" +
                          std::to_string(data.image_width()) + " but the config expects " +
                          std::to_string(cfg_.image_height) + "x" + std::to_string(cfg_.image_width));
    }
    torch::manual_seed(splitmix64(cfg_.seed));
    model_ = BmdgModel(cfg_, data.num_identities());
    optimizer_ = std::make_unique<torch::optim::Adam>(
        model_->parameters(), torch::optim::AdamOptions(cfg_.lr).weight_decay(cfg_.weight_decay));

    // Fixed probe subset for the modality-gap curve.
    Rng probe = make_rng(cfg_.seed, 4);
    std::vector<int> ids(data.num_identities());
    std::iota(ids.begin(), ids.end(), 0);
    shuffle(std::span<int>(ids), probe);
    ids.resize(std::min<std::size_t>(ids.size(), static_cast<std::size_t>(cfg_.mmd_identities)));
    std::sort(ids.begin(), ids.end());
    for (int id : ids) {
        for (auto m : {Modality::visible, Modality::infrared}) {
            auto idx = data.indices(id, m);
            shuffle(std::span<std::size_t>(idx), probe);
            idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(cfg_.mmd_images)));
            auto& dst = m == Modality::visible ? probe_v_ : probe_i_;
            dst.insert(dst.end(), idx.begin(), idx.end());
        }
    }
}

Objective Trainer::objective(const torch::Tensor& images_v, const torch::Tensor& images_i,
                             const torch::Tensor& labels, int t, const RigidTransform& r, Rng& mix_rng) {
    const auto& w = cfg_.weights;
    const int T = cfg_.num_steps;
    if (t < 0 || t > T) throw PreconditionError("step index out of range");

    auto [pv, pi] = model_->forward_pair(images_v, images_i);
    auto labels2 = torch::cat({labels, labels}, 0);
    auto low = torch::cat({pv.protos_low, pi.protos_low}, 0);
    auto high = torch::cat({pv.protos_high, pi.protos_high}, 0);
    auto masks = torch::cat({pv.masks.m, pi.masks.m}, 0);
    auto features = torch::cat({pv.maps.high(), pi.maps.high()}, 0);

    Objective o;
    o.terms.lc = loss_lc(low, w.tau);
    o.terms.hc = loss_hc(high, labels2, w.tau);
    o.terms.vc = loss_diverse(masks);
    o.terms.c = loss_compact(features, masks, high);
    o.terms.p = loss_part_id(high, labels2, model_->part_classifiers);

    if (w.lambda_e > 0 && r.kind != RigidTransform::Kind::identity) {
        constexpr int kStride = 2;
        auto [tv, ti] = model_->forward_pair(transform_image(images_v, r, kStride),
                                             transform_image(images_i, r, kStride));
        MaskScores tm = tv.masks;
        tm.m = torch::cat({tv.masks.m, ti.masks.m}, 0);
        auto back = invert_mask_transform(tm, r).m;
        auto mine = masks;
        if (!r.lossless()) {
            // Zero-filled border cells carry no information about the original frame.
            auto ones = torch::ones({1, 1, pv.masks.height, pv.masks.width}, masks.options());
            auto valid = invert_transform(apply_transform(ones, r), r).flatten(2).transpose(1, 2);
            mine = mine * valid;
            back = back * valid;
        }
        o.terms.eq = loss_equivariance(mine, back);
    } else {
        o.terms.eq = torch::zeros({}, masks.options());
    }

    o.f_v = model_->embed(pv.protos_high, pv.maps.global_vec);
    o.f_i = model_->embed(pi.protos_high, pi.maps.global_vec);
    o.f_v_t = o.f_v;
    o.f_i_t = o.f_i;
    const auto flags = direction_flags(directionality_mode(cfg_));
    const bool last = T > 0 && t == T;
    auto intermediate = [&](const torch::Tensor& own, const torch::Tensor& other, MixResult& mix) {
        if (cfg_.mixing == MixingMode::whole_mixup) {
            mix.a = whole_mixup(own, other, t, T);
        } else {
            mix = mix_prototypes(own, other, t, T, mix_rng);
        }
        return mix.a;
    };
    if (flags.visible_intermediate) {
        auto a = intermediate(pv.protos_high, pi.protos_high, o.mix_v);
        o.f_v_t = model_->embed(a, last ? pi.maps.global_vec : pv.maps.global_vec);
    }
    if (flags.infrared_intermediate) {
        auto a = intermediate(pi.protos_high, pv.protos_high, o.mix_i);
        o.f_i_t = model_->embed(a, last ? pv.maps.global_vec : pi.maps.global_vec);
    }
    o.reid = loss_reid(o.f_v, o.f_i, o.f_v_t, o.f_i_t, labels, model_->id_classifier, cfg_.cc_margin);
    o.terms.re = o.reid.total();
    o.total = total_loss(o.terms, w);
    return o;
}

torch::Tensor Trainer::augment(const torch::Tensor& images) {
    const int pad = cfg_.crop_pad;
    const auto n = images.size(0), h = images.size(2), wd = images.size(3);
    auto padded = pad > 0 ? F::pad(images, F::PadFuncOptions({pad, pad, pad, pad})) : images;
    auto out = torch::empty_like(images);
    for (int64_t i = 0; i < n; ++i) {
        const auto y0 = static_cast<int64_t>(uniform_index(augment_, 2 * pad + 1));
        const auto x0 = static_cast<int64_t>(uniform_index(augment_, 2 * pad + 1));
        out[i].copy_(padded[i].slice(1, y0, y0 + h).slice(2, x0, x0 + wd));
        if (uniform01(augment_) >= cfg_.erase_prob) continue;
        // Erase a rectangle of 2-40% of the area, aspect 0.3-3.3, filled with the mean pixel.
        for (int attempt = 0; attempt < 10; ++attempt) {
            const double area = uniform(augment_, 0.02, 0.4) * static_cast<double>(h * wd);
            const double aspect = std::exp(uniform(augment_, std::log(0.3), std::log(1.0 / 0.3)));
            const auto eh = static_cast<int64_t>(std::lround(std::sqrt(area * aspect)));
            const auto ew = static_cast<int64_t>(std::lround(std::sqrt(area / aspect)));
            if (eh < 1 || ew < 1 || eh >= h || ew >= wd) continue;
            const auto y = static_cast<int64_t>(uniform_index(augment_, h - eh + 1));
            const auto x = static_cast<int64_t>(uniform_index(augment_, wd - ew + 1));
            auto mean = out[i].mean({1, 2}, true);
            out[i].slice(1, y, y + eh).slice(2, x, x + ew).copy_(mean.expand({3, eh, ew}));
            break;
        }
    }
    return out;
}

TermValues Trainer::train_step(int t) {
    model_->train();
    auto batch = sample_batch(data_, cfg_.batch_identities, cfg_.batch_positives, sampler_);
    auto v = augment(batch.images_v);
    auto i = augment(batch.images_i);
    auto r = random_transform(cfg_.eq_transforms, augment_, 1);

    optimizer_->zero_grad();
    auto o = objective(v, i, batch.labels, t, r, mix_);
    const auto values = o.values();
    if (!std::isfinite(values.total)) {
        if (!out_dir_.empty()) {
            nlohmann::json j{{"epoch", epoch_}, {"step_t", t}, {"L_re", values.re}, {"L_bce", values.bce},
                             {"L_bcc", values.bcc}, {"L_lc", values.lc}, {"L_hc", values.hc},
                             {"L_vc", values.vc}, {"L_c", values.c}, {"L_p", values.p},
                             {"L_eq", values.eq}, {"total", values.total}};
            std::ofstream(out_dir_ / "nonfinite-loss.json") << j.dump(2) << '\n';
        }
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch_) + ": " + describe(values));
    }
    o.total.backward();
    optimizer_->step();
    return values;
}

int Trainer::batches_per_epoch() const {
    if (cfg_.batches_per_epoch > 0) return cfg_.batches_per_epoch;
    const auto per_batch = static_cast<std::size_t>(cfg_.batch_identities * cfg_.batch_positives);
    return static_cast<int>(std::max<std::size_t>(1, (data_.count(Modality::visible) + per_batch - 1) / per_batch));
}

double Trainer::learning_rate(int epoch, int batch) const {
    const int nb = batches_per_epoch();
    if (epoch < cfg_.warmup_epochs) {
        return cfg_.lr * static_cast<double>(epoch * nb + batch + 1) / static_cast<double>(cfg_.warmup_epochs * nb);
    }
    double lr = cfg_.lr;
    for (int m : cfg_.resolved_milestones()) {
        if (epoch >= m) lr *= 0.1;
    }
    return lr;
}

void Trainer::set_lr(double lr) {
    for (auto& group : optimizer_->param_groups()) {
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }
}

double Trainer::probe_mmd() {
    auto opts = F::NormalizeFuncOptions().dim(1);
    auto ev = F::normalize(model_->embed_images(data_.stack(probe_v_), Modality::visible), opts);
    auto ei = F::normalize(model_->embed_images(data_.stack(probe_i_), Modality::infrared), opts);
    return mmd_gap(ev, ei);
}

void Trainer::open_logs(bool append) {
    if (out_dir_.empty()) return;
    std::filesystem::create_directories(out_dir_ / "checkpoints");
    const auto mode = append ? std::ios::app : std::ios::trunc;
    const auto metrics_path = out_dir_ / "metrics.csv";
    const bool fresh = !append || !std::filesystem::exists(metrics_path) || std::filesystem::file_size(metrics_path) == 0;
    metrics_.open(metrics_path, std::ios::out | mode);
    mmd_.open(out_dir_ / "mmd.csv", std::ios::out | mode);
    log_.open(out_dir_ / "run.log", std::ios::out | mode);
    if (!metrics_ || !mmd_ || !log_) throw IoError("cannot write run artifacts under " + out_dir_.string());
    if (fresh) {
        metrics_ << kMetricsHeader << '\n';
        mmd_ << "epoch,step_t,mmd\n";
    }
    std::ofstream(out_dir_ / "resolved-config.json") << dump_train_config(cfg_) << '\n';
    log_ << (append ? "resumed at epoch " + std::to_string(epoch_) + "\n" : std::string()) << "config\n"
         << dump_train_config(cfg_) << '\n'
         << "identities " << data_.num_identities() << ", visible " << data_.count(Modality::visible)
         << ", infrared " << data_.count(Modality::infrared) << ", batches/epoch " << batches_per_epoch() << '\n';
    log_.flush();
}

std::filesystem::path Trainer::save(const std::filesystem::path& path) {
    CheckpointMeta meta;
    meta.epochs_completed = epoch_;
    meta.step_t = epoch_ > 0 ? step_for_epoch(epoch_ - 1, schedule_) : 0;
    meta.num_classes = model_->num_classes();
    meta.config_hash = config_hash(cfg_);
    meta.config_json = dump_train_config(cfg_);
    meta.rng_sampler = rng_state(sampler_);
    meta.rng_augment = rng_state(augment_);
    meta.rng_mix = rng_state(mix_);
    meta.torch_rng_state = torch_rng_state();
    save_checkpoint(path, model_, optimizer_.get(), meta);
    return path;
}

void Trainer::resume(const std::filesystem::path& checkpoint) {
    auto meta = read_checkpoint_meta(checkpoint);
    if (meta.config_hash != config_hash(cfg_)) {
        throw ConfigError("checkpoint " + checkpoint.string() + " was written with a different config");
    }
    if (meta.num_classes != model_->num_classes()) throw ConfigError("checkpoint identity count differs");
    torch::serialize::InputArchive archive, params;
    archive.load_from(checkpoint.string());
    archive.read("model", params);
    model_->load(params);
    load_optimizer_state(checkpoint, *optimizer_);
    restore_rng_state(sampler_, meta.rng_sampler);
    restore_rng_state(augment_, meta.rng_augment);
    restore_rng_state(mix_, meta.rng_mix);
    if (meta.torch_rng_state.defined()) set_torch_rng_state(meta.torch_rng_state);
    epoch_ = meta.epochs_completed;
    open_logs(true);
}

std::filesystem::path Trainer::run() {
    if (!out_dir_.empty() && !metrics_.is_open()) open_logs(false);
    std::filesystem::path last;
    const int nb = batches_per_epoch();
    while (epoch_ < cfg_.epochs) {
        const int t = step_for_epoch(epoch_, schedule_);
        double sum = 0.0;
        for (int b = 0; b < nb; ++b) {
            const double lr = learning_rate(epoch_, b);
            set_lr(lr);
            const auto v = train_step(t);
            sum += v.total;
            if (metrics_.is_open()) {
                metrics_ << epoch_ << ',' << t << ',' << b << ',' << lr << std::setprecision(9) << ',' << v.re
                         << ',' << v.bce << ',' << v.bcc << ',' << v.lc << ',' << v.hc << ',' << v.vc << ','
                         << v.c << ',' << v.p << ',' << v.eq << ',' << v.total << std::setprecision(6) << '\n';
            }
        }
        ++epoch_;
        if (out_dir_.empty()) continue;
        metrics_.flush();
        log_ << "epoch " << epoch_ << " t=" << t << " mean_total=" << sum / nb;
        if (cfg_.mmd_every > 0 && epoch_ % cfg_.mmd_every == 0) {
            const double gap = probe_mmd();
            mmd_ << epoch_ << ',' << t << ',' << std::setprecision(9) << gap << std::setprecision(6) << '\n';
            mmd_.flush();
            log_ << " mmd=" << gap;
        }
        log_ << '\n';
        log_.flush();
        if (cfg_.checkpoint_every > 0 && (epoch_ % cfg_.checkpoint_every == 0 || epoch_ == cfg_.epochs)) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%03d.pt", epoch_);
            save(out_dir_ / "checkpoints" / name);
        }
        last = save(out_dir_ / "checkpoint_last.pt");
    }
    return last;
}

std::filesystem::path train(const TrainConfig& cfg, const Dataset& data, const std::filesystem::path& out_dir) {
    Trainer trainer(cfg, data, out_dir);
    return trainer.run();
}

}  // namespace bmdg
