#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

namespace softmask {

/// The four published MNIST archives with their raw (inflated) sizes.
struct MnistFileInfo {
    const char* gz_name;
    const char* raw_name;
    std::size_t raw_size;
};

inline const std::array<MnistFileInfo, 4>& mnist_files() {
    static const std::array<MnistFileInfo, 4> files = {{
        {"train-images-idx3-ubyte.gz", "train-images-idx3-ubyte", 47040016},
        {"train-labels-idx1-ubyte.gz", "train-labels-idx1-ubyte", 60008},
        {"t10k-images-idx3-ubyte.gz", "t10k-images-idx3-ubyte", 7840016},
        {"t10k-labels-idx1-ubyte.gz", "t10k-labels-idx1-ubyte", 10008},
    }};
    return files;
}

/// Inflates a gzip byte stream to memory.
inline std::vector<unsigned char> gunzip(const std::vector<unsigned char>& compressed) {
    z_stream zs{};
    // 16 + MAX_WBITS selects gzip header parsing
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
        throw std::runtime_error("gunzip: inflateInit2 failed");
    std::vector<unsigned char> out;
    out.reserve(compressed.size() * 4);
    std::array<unsigned char, 1 << 16> chunk{};
    zs.next_in = const_cast<unsigned char*>(compressed.data());
    zs.avail_in = static_cast<uInt>(compressed.size());
    int rc = Z_OK;
    do {
        zs.next_out = chunk.data();
        zs.avail_out = static_cast<uInt>(chunk.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw std::runtime_error("gunzip: corrupt stream (zlib rc " + std::to_string(rc) +
                                     ")");
        }
        out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    } while (rc != Z_STREAM_END);
    inflateEnd(&zs);
    return out;
}

/// Compresses to gzip framing; used by tests to exercise gunzip.
inline std::vector<unsigned char> gzip(const std::vector<unsigned char>& raw) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_BEST_SPEED, Z_DEFLATED, 16 + MAX_WBITS, 8,
                     Z_DEFAULT_STRATEGY) != Z_OK)
        throw std::runtime_error("gzip: deflateInit2 failed");
    std::vector<unsigned char> out;
    std::array<unsigned char, 1 << 16> chunk{};
    zs.next_in = const_cast<unsigned char*>(raw.data());
    zs.avail_in = static_cast<uInt>(raw.size());
    int rc = Z_OK;
    do {
        zs.next_out = chunk.data();
        zs.avail_out = static_cast<uInt>(chunk.size());
        rc = deflate(&zs, Z_FINISH);
        if (rc == Z_STREAM_ERROR) {
            deflateEnd(&zs);
            throw std::runtime_error("gzip: deflate failed");
        }
        out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    } while (rc != Z_STREAM_END);
    deflateEnd(&zs);
    return out;
}

inline void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace softmask
