#include "bmdg/bmdg.hpp"
#include "bmdg/errors.hpp"

namespace bmdg {

namespace {

double mix_ratio(int t, int total_steps) {
    if (t < 0 || t > total_steps) throw PreconditionError("mixing step must satisfy 0 <= t <= T");
    return total_steps == 0 ? 0.0 : static_cast<double>(t) / total_steps;
}

}  // namespace

MixResult mix_prototypes(const torch::Tensor& own, const torch::Tensor& other, int t, int total_steps,
                         Rng& rng) {
    if (own.sizes() != other.sizes() || own.dim() < 2) {
        throw ShapeError("mix_prototypes needs two equally shaped [.., K, d] sets");
    }
    const double ratio = mix_ratio(t, total_steps);
    auto row_shape = own.sizes().vec();
    row_shape.pop_back();
    const int64_t rows = own.numel() / own.size(-1);
    std::vector<uint8_t> take(static_cast<std::size_t>(rows));
    for (auto& v : take) v = !(ratio <= uniform01(rng));
    auto swapped = torch::from_blob(take.data(), {rows}, torch::kUInt8).to(torch::kBool).reshape(row_shape);
    return {torch::where(swapped.unsqueeze(-1), other, own), swapped};
}

torch::Tensor whole_mixup(const torch::Tensor& own, const torch::Tensor& other, int t, int total_steps) {
    if (own.sizes() != other.sizes()) throw ShapeError("whole_mixup needs equally shaped inputs");
    const double alpha = 1.0 - mix_ratio(t, total_steps);
    return own * alpha + other * (1.0 - alpha);
}

StepSchedule StepSchedule::uniform(int epochs, int total_steps) {
    StepSchedule s{total_steps, {}};
    for (int t = 0; t < total_steps; ++t) {
        s.boundaries.push_back(static_cast<int>(static_cast<int64_t>(t) * epochs / total_steps));
    }
    return s;
}

StepSchedule StepSchedule::from_config(const TrainConfig& cfg) {
    if (cfg.step_boundaries.empty()) return uniform(cfg.epochs, cfg.num_steps);
    return {cfg.num_steps, cfg.step_boundaries};
}

int step_for_epoch(int epoch, const StepSchedule& schedule) {
    if (schedule.total_steps == 0) return 0;
    if (static_cast<int>(schedule.boundaries.size()) != schedule.total_steps) {
        throw PreconditionError("step schedule needs one boundary per step");
    }
    int t = 0;
    for (int i = 0; i < schedule.total_steps; ++i) {
        if (epoch >= schedule.boundaries[i]) t = i + 1;
    }
    return std::max(t, 1);
}

Direction directionality_mode(const TrainConfig& cfg) {
    return cfg.num_steps == 0 ? Direction::single_step : cfg.direction;
}

DirectionFlags direction_flags(Direction d) {
    switch (d) {
        case Direction::bidirectional: return {true, true};
        case Direction::v_to_i: return {true, false};
        case Direction::i_to_v: return {false, true};
        case Direction::single_step: return {false, false};
    }
    return {};
}

}  // namespace bmdg
