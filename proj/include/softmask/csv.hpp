#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace softmask {

/// Shortest round-trip decimal rendering; byte-stable across runs.
inline std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("fmt_double: conversion failed");
    return std::string(buf, ptr);
}

/// Comma-separated table with a fixed header. Rows are kept in memory and the
/// body is rendered deterministically; wall-clock metadata goes to a sidecar
/// file so the CSV itself stays byte-identical across reruns.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {
        if (header_.empty()) throw std::invalid_argument("csv: empty header");
    }

    void add_row(std::vector<std::string> cells) {
        if (cells.size() != header_.size())
            throw std::invalid_argument("csv: row has " + std::to_string(cells.size()) +
                                        " cells, header has " + std::to_string(header_.size()));
        rows_.push_back(std::move(cells));
    }

    std::size_t row_count() const { return rows_.size(); }

    std::string body() const {
        std::string out = join(header_);
        for (const auto& row : rows_) {
            out += '\n';
            out += join(row);
        }
        out += '\n';
        return out;
    }

    void write_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error(path + ": cannot open for writing");
        out << body();
        if (!out) throw std::runtime_error(path + ": write failed");
        std::ofstream meta(path + ".meta");
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        meta << "written_unix_ms="
             << std::chrono::duration_cast<std::chrono::milliseconds>(now).count() << "\n";
    }

private:
    static std::string join(const std::vector<std::string>& cells) {
        std::string out;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        return out;
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

}  // namespace softmask
