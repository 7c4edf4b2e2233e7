#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "bmdg/eval.hpp"
#include "bmdg/image.hpp"
#include "bmdg/protodisc.hpp"

namespace bmdg {

// Input image followed by one heat panel per prototype mask, each scaled by `scale`.
Image mask_panel(const Image& input, const MaskScores& masks, int sample, int scale = 4);

// x,y,identity,modality per row.
void write_projection_csv(const std::filesystem::path& path, const Projection& p, const std::vector<int>& labels,
                          const std::vector<char>& modality);
// Colour = identity, filled marker = visible, hollow = infrared.
Image scatter_plot(const torch::Tensor& coords, const std::vector<int>& labels, const std::vector<char>& modality,
                   int size = 480);

struct Series {
    std::string name;
    std::vector<double> x, y;
};
// Plain line chart with unlabeled axes; series are coloured in order.
Image line_plot(const std::vector<Series>& series, int width = 640, int height = 400);

// epoch,step_t,mmd rows written by the trainer.
Series read_mmd_csv(const std::filesystem::path& path, const std::string& name);

}  // namespace bmdg
