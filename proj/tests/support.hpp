#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "suplid/error.hpp"
#include "suplid/matrix.hpp"
#include "suplid/parallel.hpp"
#include "suplid/tensor.hpp"

namespace testing {

// Collects warnings for the lifetime of the object.
class WarningCapture {
public:
    WarningCapture() {
        previous_ = suplid::set_warning_handler([this](const std::string& m) { messages.push_back(m); });
    }
    ~WarningCapture() { suplid::set_warning_handler(previous_); }
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    bool contains(const std::string& needle) const {
        for (const auto& m : messages) {
            if (m.find(needle) != std::string::npos) return true;
        }
        return false;
    }

    std::vector<std::string> messages;

private:
    suplid::WarningHandler previous_;
};

inline suplid::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, float lo = -1.0f,
                                    float hi = 1.0f) {
    std::uniform_real_distribution<float> u(lo, hi);
    suplid::Matrix m(rows, cols);
    for (auto& v : m.values()) v = u(rng);
    return m;
}

inline std::vector<float> row_vec(const suplid::Matrix& m, std::size_t i) {
    auto r = m.row(i);
    return {r.begin(), r.end()};
}

inline suplid::Tensor random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> u(0, 255);
    std::vector<std::uint8_t> px(h * w * 3);
    for (auto& v : px) v = static_cast<std::uint8_t>(u(rng));
    return suplid::Tensor({h, w, 3}, std::move(px));
}

inline suplid::Tensor solid_image(std::size_t h, std::size_t w, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    std::vector<std::uint8_t> px;
    px.reserve(h * w * 3);
    for (std::size_t i = 0; i < h * w; ++i) {
        px.push_back(r);
        px.push_back(g);
        px.push_back(b);
    }
    return suplid::Tensor({h, w, 3}, std::move(px));
}

// RAII thread-count override.
class ThreadCount {
public:
    explicit ThreadCount(unsigned n) : previous_(suplid::num_threads()) { suplid::set_num_threads(n); }
    ~ThreadCount() { suplid::set_num_threads(previous_); }
    ThreadCount(const ThreadCount&) = delete;
    ThreadCount& operator=(const ThreadCount&) = delete;

private:
    unsigned previous_;
};

}  // namespace testing
