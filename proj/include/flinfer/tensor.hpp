#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flinfer/errors.hpp"

namespace flinfer {

// Dense row-major matrix of 64-bit reals.
struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor2() = default;
    Tensor2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Tensor2(std::size_t r, std::size_t c, std::vector<double> values)
        : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != rows * cols) throw ShapeError("Tensor2: data length does not match shape");
    }

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

struct ParamEntry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t count = 0;
};

// Ordered (name, shape) list describing how a flat value array splits into
// named tensors.
class ParamLayout {
  public:
    static std::shared_ptr<const ParamLayout> create(
        std::vector<std::pair<std::string, std::vector<std::size_t>>> spec) {
        auto layout = std::make_shared<ParamLayout>();
        std::size_t offset = 0;
        for (auto& [name, shape] : spec) {
            ParamEntry e;
            e.name = std::move(name);
            e.shape = std::move(shape);
            e.offset = offset;
            e.count = 1;
            for (std::size_t d : e.shape) e.count *= d;
            offset += e.count;
            layout->entries_.push_back(std::move(e));
        }
        layout->total_ = offset;
        return layout;
    }

    const std::vector<ParamEntry>& entries() const { return entries_; }
    std::size_t total() const { return total_; }

    const ParamEntry& find(std::string_view name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e;
        throw ShapeError("ParamLayout: no entry named " + std::string(name));
    }

    bool operator==(const ParamLayout& other) const {
        if (total_ != other.total_ || entries_.size() != other.entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name != other.entries_[i].name ||
                entries_[i].shape != other.entries_[i].shape)
                return false;
        }
        return true;
    }

    // FNV-1a over names and shapes; checkpoint loading validates this.
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xff;
                h *= 0x100000001b3ULL;
            }
        };
        for (const auto& e : entries_) {
            for (unsigned char c : e.name) {
                h ^= c;
                h *= 0x100000001b3ULL;
            }
            mix(e.shape.size());
            for (std::size_t d : e.shape) mix(d);
        }
        return h;
    }

  private:
    std::vector<ParamEntry> entries_;
    std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

// Flat parameter/gradient vector plus the layout that names its pieces.
struct ParameterVector {
    LayoutPtr layout;
    std::vector<double> values;

    ParameterVector() = default;
    explicit ParameterVector(LayoutPtr l) : layout(std::move(l)), values(layout->total(), 0.0) {}
    ParameterVector(LayoutPtr l, std::vector<double> v) : layout(std::move(l)), values(std::move(v)) {
        if (values.size() != layout->total())
            throw ShapeError("ParameterVector: value count does not match layout");
    }

    std::size_t size() const { return values.size(); }

    std::span<double> view(std::string_view name) {
        const auto& e = layout->find(name);
        return {values.data() + e.offset, e.count};
    }
    std::span<const double> view(std::string_view name) const {
        const auto& e = layout->find(name);
        return {values.data() + e.offset, e.count};
    }

    bool same_layout(const ParameterVector& other) const {
        return layout == other.layout || (layout && other.layout && *layout == *other.layout);
    }

    // Split into named tensors (vectors come back as 1 x n).
    std::vector<std::pair<std::string, Tensor2>> unflatten() const {
        std::vector<std::pair<std::string, Tensor2>> out;
        for (const auto& e : layout->entries()) {
            std::size_t r = e.shape.size() == 2 ? e.shape[0] : 1;
            std::size_t c = e.shape.size() == 2 ? e.shape[1] : e.count;
            Tensor2 t(r, c);
            std::copy(values.begin() + static_cast<std::ptrdiff_t>(e.offset),
                      values.begin() + static_cast<std::ptrdiff_t>(e.offset + e.count),
                      t.data.begin());
            out.emplace_back(e.name, std::move(t));
        }
        return out;
    }

    static ParameterVector flatten(LayoutPtr layout,
                                   const std::vector<std::pair<std::string, Tensor2>>& parts) {
        ParameterVector out(layout);
        if (parts.size() != layout->entries().size())
            throw ShapeError("flatten: part count does not match layout");
        for (const auto& [name, tensor] : parts) {
            const auto& e = layout->find(name);
            if (tensor.data.size() != e.count) throw ShapeError("flatten: size mismatch for " + name);
            std::copy(tensor.data.begin(), tensor.data.end(),
                      out.values.begin() + static_cast<std::ptrdiff_t>(e.offset));
        }
        return out;
    }
};

inline void check_same_layout(const ParameterVector& a, const ParameterVector& b,
                              const char* what) {
    if (!a.same_layout(b)) throw ShapeError(std::string(what) + ": parameter layout mismatch");
}

inline double grad_l2_norm(const ParameterVector& g) {
    double s = 0.0;
    for (double v : g.values) s += v * v;
    return std::sqrt(s);
}

inline ParameterVector operator-(const ParameterVector& a, const ParameterVector& b) {
    check_same_layout(a, b, "operator-");
    ParameterVector out = a;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= b.values[i];
    return out;
}

inline ParameterVector operator+(const ParameterVector& a, const ParameterVector& b) {
    check_same_layout(a, b, "operator+");
    ParameterVector out = a;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += b.values[i];
    return out;
}

inline ParameterVector operator*(double s, const ParameterVector& a) {
    ParameterVector out = a;
    for (auto& v : out.values) v *= s;
    return out;
}

}  // namespace flinfer
