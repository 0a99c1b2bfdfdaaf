#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "softmask/numerics.hpp"

namespace softmask {

/// Plain-text P2 graymap of a mask: surviving coordinates render white (255),
/// pruned ones black (0).
inline std::string render_mask_pgm(const Vec& mask, std::size_t side) {
    if (mask.size() != side * side)
        throw std::invalid_argument("mask-view: mask length " + std::to_string(mask.size()) +
                                    " does not fill a " + std::to_string(side) + "x" +
                                    std::to_string(side) + " image");
    std::string out = "P2\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            if (c) out += ' ';
            out += mask[r * side + c] > 0.0 ? "255" : "0";
        }
        out += '\n';
    }
    return out;
}

/// Overlay mode: the elementwise product mask * image, in gray levels.
inline std::string render_overlay_pgm(const Vec& mask, const Vec& image, std::size_t side) {
    if (mask.size() != side * side || image.size() != side * side)
        throw std::invalid_argument("mask-view: mask/image lengths do not fill a " +
                                    std::to_string(side) + "x" + std::to_string(side) +
                                    " image");
    std::string out = "P2\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            if (c) out += ' ';
            const double v = mask[r * side + c] * image[r * side + c];
            out += std::to_string(static_cast<int>(std::lround(v * 255.0)));
        }
        out += '\n';
    }
    return out;
}

/// One mask value per line; blank lines and '#' comments ignored.
inline Vec read_mask_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    Vec out;
    std::string line;
    while (std::getline(in, line)) {
        const auto pos = line.find('#');
        if (pos != std::string::npos) line = line.substr(0, pos);
        std::istringstream ls(line);
        double v;
        while (ls >> v) out.push_back(v);
    }
    return out;
}

inline void write_mask_file(const std::string& path, const Vec& mask) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    for (double v : mask) out << v << "\n";
    if (!out) throw std::runtime_error(path + ": write failed");
}

/// Minimal P2 reader used by the overlay mode; returns values in [0,1].
inline std::pair<Vec, std::size_t> read_pgm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    std::string magic;
    in >> magic;
    if (magic != "P2") throw std::runtime_error(path + ": expected plain P2 graymap");
    std::size_t w = 0, h = 0;
    int maxval = 0;
    in >> w >> h >> maxval;
    if (!in || w == 0 || w != h || maxval <= 0)
        throw std::runtime_error(path + ": unsupported graymap header");
    Vec out(w * h);
    for (double& v : out) {
        int pix;
        if (!(in >> pix)) throw std::runtime_error(path + ": truncated pixel data");
        v = static_cast<double>(pix) / static_cast<double>(maxval);
    }
    return {std::move(out), w};
}

}  // namespace softmask
