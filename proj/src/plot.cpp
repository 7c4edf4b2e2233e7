#include "bmdg/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "bmdg/errors.hpp"

namespace bmdg {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

Rgb palette(int i) {
    // Golden-angle hue walk, fixed saturation/value.
    const double h = std::fmod(0.61803398875 * i, 1.0) * 6.0;
    const double s = 0.75, v = 0.9, c = v * s;
    const double x = c * (1 - std::abs(std::fmod(h, 2.0) - 1));
    std::array<double, 3> rgb{};
    switch (static_cast<int>(h)) {
        case 0: rgb = {c, x, 0}; break;
        case 1: rgb = {x, c, 0}; break;
        case 2: rgb = {0, c, x}; break;
        case 3: rgb = {0, x, c}; break;
        case 4: rgb = {x, 0, c}; break;
        default: rgb = {c, 0, x}; break;
    }
    const double m = v - c;
    return {static_cast<std::uint8_t>(255 * (rgb[0] + m)), static_cast<std::uint8_t>(255 * (rgb[1] + m)),
            static_cast<std::uint8_t>(255 * (rgb[2] + m))};
}

void put(Image& img, int y, int x, Rgb c) {
    if (y < 0 || x < 0 || y >= img.height || x >= img.width) return;
    for (int k = 0; k < 3; ++k) img.at(y, x, k) = c[k];
}

void fill(Image& img, std::uint8_t v) { std::fill(img.pixels.begin(), img.pixels.end(), v); }

void line(Image& img, int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        put(img, y0, x0, c);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) { err += dy; x0 += sx; }
        if (e2 <= dx) { err += dx; y0 += sy; }
    }
}

std::pair<double, double> range(const std::vector<double>& v) {
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    double a = *lo, b = *hi;
    if (b - a < 1e-12) { a -= 0.5; b += 0.5; }
    const double pad = 0.05 * (b - a);
    return {a - pad, b + pad};
}

}  // namespace

Image mask_panel(const Image& input, const MaskScores& masks, int sample, int scale) {
    const int k = static_cast<int>(masks.m.size(-1));
    const int h = input.height * scale, w = input.width * scale;
    Image out(h, w * (k + 1) + k * 2, 3);
    fill(out, 255);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = input.at(y / scale, x / scale, input.channels == 3 ? c : 0);
    auto grid = masks.spatial()[sample].to(torch::kFloat64).contiguous();  // [K, Hm, Wm]
    auto acc = grid.accessor<double, 3>();
    for (int p = 0; p < k; ++p) {
        const int x0 = (p + 1) * (w + 2);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int gy = std::min<int>(y * masks.height / h, masks.height - 1);
                const int gx = std::min<int>(x * masks.width / w, masks.width - 1);
                const double v = std::clamp(acc[p][gy][gx], 0.0, 1.0);
                put(out, y, x0 + x, {static_cast<std::uint8_t>(255 * v), static_cast<std::uint8_t>(80 * v),
                                     static_cast<std::uint8_t>(255 * (1 - v))});
            }
        }
    }
    return out;
}

void write_projection_csv(const std::filesystem::path& path, const Projection& p, const std::vector<int>& labels,
                          const std::vector<char>& modality) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    auto c = p.coords.contiguous();
    auto acc = c.accessor<double, 2>();
    os << "x,y,identity,modality\n";
    os.precision(9);
    for (int64_t i = 0; i < c.size(0); ++i) os << acc[i][0] << ',' << acc[i][1] << ',' << labels[i] << ',' << modality[i] << '\n';
}

Image scatter_plot(const torch::Tensor& coords, const std::vector<int>& labels, const std::vector<char>& modality,
                   int size) {
    Image img(size, size, 3);
    fill(img, 255);
    auto c = coords.to(torch::kFloat64).contiguous();
    auto acc = c.accessor<double, 2>();
    std::vector<double> xs, ys;
    for (int64_t i = 0; i < c.size(0); ++i) { xs.push_back(acc[i][0]); ys.push_back(acc[i][1]); }
    if (xs.empty()) return img;
    auto [x0, x1] = range(xs);
    auto [y0, y1] = range(ys);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const int px = static_cast<int>((xs[i] - x0) / (x1 - x0) * (size - 1));
        const int py = static_cast<int>((1 - (ys[i] - y0) / (y1 - y0)) * (size - 1));
        const auto col = palette(labels[i]);
        for (int dy = -3; dy <= 3; ++dy)
            for (int dx = -3; dx <= 3; ++dx)
                if (modality[i] == 'V' || std::max(std::abs(dx), std::abs(dy)) == 3) put(img, py + dy, px + dx, col);
    }
    return img;
}

Image line_plot(const std::vector<Series>& series, int width, int height) {
    Image img(height, width, 3);
    fill(img, 255);
    std::vector<double> xs, ys;
    for (const auto& s : series) {
        xs.insert(xs.end(), s.x.begin(), s.x.end());
        ys.insert(ys.end(), s.y.begin(), s.y.end());
    }
    const int m = 30;
    line(img, m, height - m, width - m, height - m, {0, 0, 0});
    line(img, m, m, m, height - m, {0, 0, 0});
    if (xs.empty()) return img;
    auto [x0, x1] = range(xs);
    auto [y0, y1] = range(ys);
    auto px = [&](double x) { return m + static_cast<int>((x - x0) / (x1 - x0) * (width - 2 * m)); };
    auto py = [&](double y) { return height - m - static_cast<int>((y - y0) / (y1 - y0) * (height - 2 * m)); };
    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto col = palette(static_cast<int>(s));
        const auto& ser = series[s];
        for (std::size_t i = 0; i + 1 < ser.x.size(); ++i) line(img, px(ser.x[i]), py(ser.y[i]), px(ser.x[i + 1]), py(ser.y[i + 1]), col);
        for (std::size_t i = 0; i < ser.x.size(); ++i)
            for (int d = -2; d <= 2; ++d) { put(img, py(ser.y[i]) + d, px(ser.x[i]), col); put(img, py(ser.y[i]), px(ser.x[i]) + d, col); }
    }
    return img;
}

Series read_mmd_csv(const std::filesystem::path& path, const std::string& name) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    Series s{name, {}, {}};
    std::string row;
    std::getline(is, row);
    while (std::getline(is, row)) {
        if (row.empty()) continue;
        std::istringstream r(row);
        std::string epoch, step, gap;
        std::getline(r, epoch, ',');
        std::getline(r, step, ',');
        std::getline(r, gap, ',');
        s.x.push_back(std::stod(epoch));
        s.y.push_back(std::stod(gap));
    }
    return s;
}

}  // namespace bmdg
