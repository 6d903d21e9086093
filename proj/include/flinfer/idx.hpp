#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "flinfer/dataset.hpp"
#include "flinfer/errors.hpp"

namespace flinfer {

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& what) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4))
        throw FormatError("idx: truncated file while reading " + what);
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Parse the big-endian IDX pair (images magic 0x803, labels 0x801); pixel
// bytes are scaled into [0, 1].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("idx: cannot open " + images_path);
    if (detail::read_be32(img, "images magic") != kIdxImagesMagic)
        throw FormatError("idx: wrong magic in " + images_path);
    const std::uint32_t n = detail::read_be32(img, "image count");
    const std::uint32_t rows = detail::read_be32(img, "rows");
    const std::uint32_t cols = detail::read_be32(img, "cols");

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("idx: cannot open " + labels_path);
    if (detail::read_be32(lab, "labels magic") != kIdxLabelsMagic)
        throw FormatError("idx: wrong magic in " + labels_path);
    const std::uint32_t n_labels = detail::read_be32(lab, "label count");
    if (n != n_labels)
        throw FormatError("idx: image count " + std::to_string(n) + " does not match label count " +
                          std::to_string(n_labels));

    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    Dataset ds;
    ds.features = Tensor2(n, dim);
    ds.labels.resize(n);

    std::vector<unsigned char> pixel_row(dim);
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!img.read(reinterpret_cast<char*>(pixel_row.data()),
                      static_cast<std::streamsize>(dim)))
            throw FormatError("idx: truncated pixel data in " + images_path);
        auto r = ds.features.row(i);
        for (std::size_t k = 0; k < dim; ++k) r[k] = pixel_row[k] / 255.0;
    }
    std::vector<unsigned char> label_bytes(n);
    if (n > 0 && !lab.read(reinterpret_cast<char*>(label_bytes.data()),
                           static_cast<std::streamsize>(n)))
        throw FormatError("idx: truncated label data in " + labels_path);

    std::size_t max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        ds.labels[i] = label_bytes[i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.class_count = n > 0 ? max_label + 1 : 0;
    return ds;
}

// Inverse of load_idx; feature values are rescaled to the nearest byte, so
// write(load(f)) reproduces f exactly.
inline void write_idx(const Dataset& ds, std::size_t image_rows, std::size_t image_cols,
                      const std::string& images_path, const std::string& labels_path) {
    if (image_rows * image_cols != ds.features.cols)
        throw ShapeError("write_idx: rows*cols must equal feature dim");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("idx: cannot write " + images_path);
    detail::write_be32(img, kIdxImagesMagic);
    detail::write_be32(img, static_cast<std::uint32_t>(ds.size()));
    detail::write_be32(img, static_cast<std::uint32_t>(image_rows));
    detail::write_be32(img, static_cast<std::uint32_t>(image_cols));
    std::vector<unsigned char> buf(ds.features.cols);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto r = ds.features.row(i);
        for (std::size_t k = 0; k < buf.size(); ++k)
            buf[k] = static_cast<unsigned char>(std::lround(r[k] * 255.0));
        img.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("idx: cannot write " + labels_path);
    detail::write_be32(lab, kIdxLabelsMagic);
    detail::write_be32(lab, static_cast<std::uint32_t>(ds.size()));
    for (std::size_t y : ds.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

}  // namespace flinfer
