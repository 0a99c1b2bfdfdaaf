#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "softmask/csv.hpp"
#include "softmask/masked_model.hpp"
#include "softmask/numerics.hpp"

namespace softmask {

// ---------------------------------------------------------------------------
// IDX binary format (big-endian, magic 2051 for images / 2049 for labels)
// ---------------------------------------------------------------------------

namespace idx {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

struct Images {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;  // count * rows * cols bytes
};

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const std::string& path,
                                 std::size_t offset) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error(path + ": truncated, expected 4 bytes at offset " +
                                 std::to_string(offset));
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_u32_be(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    return in;
}

}  // namespace detail

inline Images read_images(const std::string& path) {
    auto in = detail::open_input(path);
    const std::uint32_t magic = detail::read_u32_be(in, path, 0);
    if (magic != kImagesMagic)
        throw std::runtime_error(path + ": bad magic at offset 0, expected " +
                                 std::to_string(kImagesMagic) + ", got " +
                                 std::to_string(magic));
    Images img;
    img.count = detail::read_u32_be(in, path, 4);
    img.rows = detail::read_u32_be(in, path, 8);
    img.cols = detail::read_u32_be(in, path, 12);
    const std::size_t n = img.count * img.rows * img.cols;
    img.pixels.resize(n);
    if (!in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n)))
        throw std::runtime_error(path + ": truncated, expected " + std::to_string(n) +
                                 " pixel bytes at offset 16");
    return img;
}

inline std::vector<int> read_labels(const std::string& path) {
    auto in = detail::open_input(path);
    const std::uint32_t magic = detail::read_u32_be(in, path, 0);
    if (magic != kLabelsMagic)
        throw std::runtime_error(path + ": bad magic at offset 0, expected " +
                                 std::to_string(kLabelsMagic) + ", got " +
                                 std::to_string(magic));
    const std::uint32_t count = detail::read_u32_be(in, path, 4);
    std::vector<std::uint8_t> raw(count);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count)))
        throw std::runtime_error(path + ": truncated, expected " + std::to_string(count) +
                                 " label bytes at offset 8");
    return {raw.begin(), raw.end()};
}

inline void write_images(const std::string& path, const Images& img) {
    if (img.pixels.size() != img.count * img.rows * img.cols)
        throw std::invalid_argument(path + ": pixel buffer does not match header counts");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    detail::write_u32_be(out, kImagesMagic);
    detail::write_u32_be(out, static_cast<std::uint32_t>(img.count));
    detail::write_u32_be(out, static_cast<std::uint32_t>(img.rows));
    detail::write_u32_be(out, static_cast<std::uint32_t>(img.cols));
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

inline void write_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    detail::write_u32_be(out, kLabelsMagic);
    detail::write_u32_be(out, static_cast<std::uint32_t>(labels.size()));
    for (int y : labels) {
        if (y < 0 || y > 255) throw std::invalid_argument("write_labels: label out of byte range");
        const auto b = static_cast<unsigned char>(y);
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace idx

/// Loads an IDX image/label pair into a dataset with pixel bytes rescaled to
/// [0,1]. Image and label counts must agree.
inline LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const idx::Images img = idx::read_images(images_path);
    const std::vector<int> labels = idx::read_labels(labels_path);
    if (img.count != labels.size())
        throw std::runtime_error("load_idx: " + std::to_string(img.count) + " images vs " +
                                 std::to_string(labels.size()) + " labels");
    const std::size_t d = img.rows * img.cols;
    DenseMatrix features(img.count, d);
    for (std::size_t i = 0; i < img.count; ++i)
        for (std::size_t j = 0; j < d; ++j)
            features(i, j) = static_cast<double>(img.pixels[i * d + j]) / 255.0;
    int max_label = 1;
    for (int y : labels) max_label = std::max(max_label, y);
    return make_dataset(std::move(features), labels, max_label + 1, Split::Train);
}

/// Debug export of a feature matrix: one row per sample, label last.
inline CsvWriter features_csv(const LabeledDataset& data) {
    std::vector<std::string> header;
    for (std::size_t j = 0; j < data.feature_dim(); ++j)
        header.push_back("feature_" + std::to_string(j));
    header.push_back("label");
    CsvWriter csv(std::move(header));
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::vector<std::string> row;
        for (std::size_t j = 0; j < data.feature_dim(); ++j)
            row.push_back(fmt_double(data.features(i, j)));
        row.push_back(std::to_string(data.labels[i]));
        csv.add_row(std::move(row));
    }
    return csv;
}

// ---------------------------------------------------------------------------
// Subset construction
// ---------------------------------------------------------------------------

struct MnistSubsetSpec {
    std::vector<int> digits = {0, 1};
    std::size_t per_class = 200;
    std::size_t train_per_class = 160;
    std::size_t val_per_class = 40;
    std::size_t side = 20;           // output images are side x side
    bool add_intercept = false;      // append a column of ones

    void validate() const {
        if (digits.empty()) throw std::invalid_argument("subset: no digits requested");
        if (train_per_class + val_per_class != per_class)
            throw std::invalid_argument("subset: train " + std::to_string(train_per_class) +
                                        " + validation " + std::to_string(val_per_class) +
                                        " does not sum to " + std::to_string(per_class) +
                                        " per class");
        if (side == 0) throw std::invalid_argument("subset: side must be positive");
    }
};

namespace detail {

/// Area-weighted resampling of a square image; a box filter with fractional
/// overlap, so the [0,1] range and the mean intensity are preserved.
inline Vec resize_area(std::span<const double> src, std::size_t in_side, std::size_t out_side) {
    if (in_side == out_side) return Vec(src.begin(), src.end());
    const double scale = static_cast<double>(in_side) / static_cast<double>(out_side);
    // 1-D overlap weights, shared by rows and columns
    std::vector<std::vector<std::pair<std::size_t, double>>> overlap(out_side);
    for (std::size_t o = 0; o < out_side; ++o) {
        const double lo = o * scale, hi = (o + 1) * scale;
        for (auto i = static_cast<std::size_t>(lo); i < in_side && i < hi; ++i) {
            const double w = std::min(hi, static_cast<double>(i + 1)) -
                             std::max(lo, static_cast<double>(i));
            if (w > 0.0) overlap[o].push_back({i, w / scale});
        }
    }
    Vec out(out_side * out_side, 0.0);
    for (std::size_t r = 0; r < out_side; ++r)
        for (std::size_t c = 0; c < out_side; ++c) {
            double acc = 0.0;
            for (const auto& [ri, rw] : overlap[r])
                for (const auto& [ci, cw] : overlap[c]) acc += rw * cw * src[ri * in_side + ci];
            out[r * out_side + c] = acc;
        }
    return out;
}

}  // namespace detail

/// Seeded class-balanced subset with optional downsampling and intercept
/// column. Labels are remapped to the position of their digit in spec.digits.
inline std::pair<LabeledDataset, LabeledDataset> make_subset(const LabeledDataset& full,
                                                             const MnistSubsetSpec& spec,
                                                             SeededRng& rng) {
    spec.validate();
    const auto in_side = static_cast<std::size_t>(
        std::llround(std::sqrt(static_cast<double>(full.feature_dim()))));
    if (in_side * in_side != full.feature_dim())
        throw std::invalid_argument("make_subset: feature dimension " +
                                    std::to_string(full.feature_dim()) + " is not square");

    std::vector<std::vector<std::size_t>> pools(spec.digits.size());
    for (std::size_t i = 0; i < full.size(); ++i)
        for (std::size_t c = 0; c < spec.digits.size(); ++c)
            if (full.labels[i] == spec.digits[c]) pools[c].push_back(i);
    for (std::size_t c = 0; c < spec.digits.size(); ++c)
        if (pools[c].size() < spec.per_class)
            throw std::invalid_argument("make_subset: digit " + std::to_string(spec.digits[c]) +
                                        " has " + std::to_string(pools[c].size()) +
                                        " samples, need " + std::to_string(spec.per_class));

    const std::size_t d_out = spec.side * spec.side + (spec.add_intercept ? 1 : 0);
    const std::size_t n_classes = spec.digits.size();
    DenseMatrix train_x(spec.train_per_class * n_classes, d_out);
    DenseMatrix val_x(spec.val_per_class * n_classes, d_out);
    std::vector<int> train_y, val_y;

    std::size_t train_row = 0, val_row = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        rng.shuffle(pools[c]);
        for (std::size_t j = 0; j < spec.per_class; ++j) {
            const Vec img =
                detail::resize_area(full.features.row(pools[c][j]), in_side, spec.side);
            const bool is_train = j < spec.train_per_class;
            auto row = is_train ? train_x.row(train_row) : val_x.row(val_row);
            std::copy(img.begin(), img.end(), row.begin());
            if (spec.add_intercept) row[d_out - 1] = 1.0;
            if (is_train) {
                train_y.push_back(static_cast<int>(c));
                ++train_row;
            } else {
                val_y.push_back(static_cast<int>(c));
                ++val_row;
            }
        }
    }
    auto n_cls = static_cast<int>(n_classes);
    return {make_dataset(std::move(train_x), std::move(train_y), n_cls, Split::Train),
            make_dataset(std::move(val_x), std::move(val_y), n_cls, Split::Validation)};
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

struct SyntheticPlanted {
    LabeledDataset data;
    std::vector<std::size_t> support;
    Vec coefficients;  // nonzero on the support only
};

/// Binary labels from a k-sparse linear logit over Gaussian features, with
/// label-flip noise. Returns the generating support for recovery scoring.
inline SyntheticPlanted make_synthetic_planted(std::size_t d, std::size_t k,
                                               std::size_t n_samples, double noise,
                                               SeededRng& rng) {
    if (k < 1 || k > d)
        throw std::invalid_argument("make_synthetic_planted: support size " +
                                    std::to_string(k) + " outside [1," + std::to_string(d) +
                                    "]");
    if (!(noise >= 0.0 && noise < 0.5))
        throw std::invalid_argument("make_synthetic_planted: noise must lie in [0, 0.5)");

    SyntheticPlanted out;
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx);
    out.support.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(out.support.begin(), out.support.end());
    out.coefficients.assign(d, 0.0);
    for (std::size_t j : out.support)
        out.coefficients[j] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(1.0, 2.0);

    DenseMatrix x(n_samples, d);
    std::vector<int> y(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        double logit = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            x(i, j) = rng.normal();
            logit += x(i, j) * out.coefficients[j];
        }
        int label = logit > 0.0 ? 1 : 0;
        if (noise > 0.0 && rng.uniform() < noise) label = 1 - label;
        y[i] = label;
    }
    out.data = make_dataset(std::move(x), std::move(y), 2, Split::Train);
    return out;
}

namespace detail {

// seven-segment skeletons in unit glyph coordinates (x right, y down)
struct GlyphSegment {
    double x0, y0, x1, y1;
};

inline const std::array<GlyphSegment, 7>& segment_table() {
    static const std::array<GlyphSegment, 7> segs = {{
        {0.25, 0.15, 0.75, 0.15},  // A top
        {0.75, 0.15, 0.75, 0.50},  // B upper right
        {0.75, 0.50, 0.75, 0.85},  // C lower right
        {0.25, 0.85, 0.75, 0.85},  // D bottom
        {0.25, 0.50, 0.25, 0.85},  // E lower left
        {0.25, 0.15, 0.25, 0.50},  // F upper left
        {0.25, 0.50, 0.75, 0.50},  // G middle
    }};
    return segs;
}

inline const std::vector<int>& digit_segments(int digit) {
    static const std::array<std::vector<int>, 10> lit = {{
        {0, 1, 2, 3, 4, 5},     // 0
        {1, 2},                 // 1
        {0, 1, 6, 4, 3},        // 2
        {0, 1, 6, 2, 3},        // 3
        {5, 6, 1, 2},           // 4
        {0, 5, 6, 2, 3},        // 5
        {0, 5, 6, 4, 3, 2},     // 6
        {0, 1, 2},              // 7
        {0, 1, 2, 3, 4, 5, 6},  // 8
        {0, 1, 2, 3, 5, 6},     // 9
    }};
    return lit[digit];
}

inline double point_segment_distance(double px, double py, const GlyphSegment& s) {
    const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double cx = s.x0 + t * dx, cy = s.y0 + t * dy;
    return std::sqrt((px - cx) * (px - cx) + (py - cy) * (py - cy));
}

}  // namespace detail

/// Offline stand-in for the digit corpus: seven-segment glyphs with jittered
/// placement, stroke width and ink, quantized to 255 gray levels like the IDX
/// files. Labels are the literal digits so the output feeds make_subset.
inline idx::Images synthetic_digit_images(std::size_t per_class, std::size_t side,
                                          double pixel_noise, SeededRng& rng,
                                          std::vector<int>* labels_out,
                                          const std::vector<int>& digits = {0, 1, 2, 3, 4,
                                                                            5, 6, 7, 8, 9}) {
    idx::Images img;
    img.count = digits.size() * per_class;
    img.rows = side;
    img.cols = side;
    img.pixels.resize(img.count * side * side);
    if (labels_out) labels_out->resize(img.count);

    const double canvas = static_cast<double>(side);
    std::size_t i = 0;
    for (int digit : digits) {
        for (std::size_t rep = 0; rep < per_class; ++rep, ++i) {
            if (labels_out) (*labels_out)[i] = digit;
            const double scale = canvas * rng.uniform(0.78, 0.96);
            const double ox = 0.5 * (canvas - scale) + rng.uniform(-1.5, 1.5);
            const double oy = 0.5 * (canvas - scale) + rng.uniform(-1.5, 1.5);
            const double ink = rng.uniform(0.85, 1.0);
            const double sigma = 0.5 * rng.uniform(1.4, 2.4);

            // jittered copy of the lit segments, scaled onto the canvas
            std::vector<detail::GlyphSegment> lit;
            for (int s : detail::digit_segments(digit)) {
                detail::GlyphSegment g = detail::segment_table()[s];
                g.x0 = ox + scale * (g.x0 + rng.uniform(-0.025, 0.025));
                g.y0 = oy + scale * (g.y0 + rng.uniform(-0.025, 0.025));
                g.x1 = ox + scale * (g.x1 + rng.uniform(-0.025, 0.025));
                g.y1 = oy + scale * (g.y1 + rng.uniform(-0.025, 0.025));
                lit.push_back(g);
            }

            for (std::size_t r = 0; r < side; ++r) {
                for (std::size_t c = 0; c < side; ++c) {
                    const double px = static_cast<double>(c);
                    const double py = static_cast<double>(r);
                    double dist = 1e300;
                    for (const auto& seg : lit)
                        dist = std::min(dist, detail::point_segment_distance(px, py, seg));
                    double v = ink * std::exp(-0.5 * (dist / sigma) * (dist / sigma));
                    if (pixel_noise > 0.0) v += pixel_noise * rng.normal();
                    v = std::clamp(v, 0.0, 1.0);
                    img.pixels[(i * side + r) * side + c] =
                        static_cast<std::uint8_t>(std::lround(v * 255.0));
                }
            }
        }
    }
    return img;
}

inline LabeledDataset dataset_from_idx_images(const idx::Images& img,
                                              const std::vector<int>& labels,
                                              int num_classes) {
    const std::size_t d = img.rows * img.cols;
    DenseMatrix features(img.count, d);
    for (std::size_t i = 0; i < img.count; ++i)
        for (std::size_t j = 0; j < d; ++j)
            features(i, j) = static_cast<double>(img.pixels[i * d + j]) / 255.0;
    return make_dataset(std::move(features), labels, num_classes, Split::Train);
}

/// Ten-class glyph corpus as a loaded dataset.
inline LabeledDataset synthetic_digit_corpus(std::size_t per_class, std::size_t side,
                                             double pixel_noise, SeededRng& rng) {
    std::vector<int> labels;
    const idx::Images img = synthetic_digit_images(per_class, side, pixel_noise, rng, &labels);
    return dataset_from_idx_images(img, labels, 10);
}

/// Just the digits 0 and 1, already loaded.
inline LabeledDataset synthetic_digit_pair(std::size_t per_class, std::size_t side,
                                           double pixel_noise, SeededRng& rng) {
    std::vector<int> labels;
    const idx::Images img =
        synthetic_digit_images(per_class, side, pixel_noise, rng, &labels, {0, 1});
    return dataset_from_idx_images(img, labels, 2);
}

}  // namespace softmask
