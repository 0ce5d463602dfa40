#include "vln/kernels.hpp"

#include <cmath>

#include <omp.h>

namespace vln::kernels {

namespace {
using idx = std::ptrdiff_t;

// below this many multiply-adds the parallel region costs more than it saves
constexpr std::size_t kParallelThreshold = 1 << 14;
}  // namespace

int max_threads() { return omp_get_max_threads(); }

namespace serial {

void gemv(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = a.data() + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
}

void gemv_bias(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
               std::span<const double> b, std::span<double> y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = a.data() + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] = acc + b[r];
    }
}

void gemv_t_acc(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
                std::span<double> y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double xr = x[r];
        if (xr == 0.0) continue;
        const double* row = a.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * xr;
    }
}

void ger(std::span<double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
         std::span<const double> y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double xr = x[r];
        if (xr == 0.0) continue;
        double* row = a.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += xr * y[c];
    }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void scale(double alpha, std::span<double> x) {
    for (double& v : x) v *= alpha;
}

void sum_buffers(std::span<const std::span<const double>> buffers, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) {
        double acc = 0.0;
        for (const auto& b : buffers) acc += b[i];
        out[i] = acc;
    }
}

void adam_step(std::span<double> params, std::span<const double> grad, std::span<double> m, std::span<double> v,
               long t, const AdamHyper& hp) {
    const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i] + hp.weight_decay * params[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        params[i] -= hp.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + hp.eps);
    }
}

}  // namespace serial

namespace omp {

void gemv(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y) {
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
    for (idx r = 0; r < static_cast<idx>(rows); ++r) {
        const double* row = a.data() + static_cast<std::size_t>(r) * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[static_cast<std::size_t>(r)] = acc;
    }
}

void gemv_bias(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
               std::span<const double> b, std::span<double> y) {
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
    for (idx r = 0; r < static_cast<idx>(rows); ++r) {
        const double* row = a.data() + static_cast<std::size_t>(r) * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[static_cast<std::size_t>(r)] = acc + b[static_cast<std::size_t>(r)];
    }
}

void gemv_t_acc(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
                std::span<double> y) {
    // parallel over output columns so no two threads write the same entry;
    // each column still accumulates rows in serial order
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
    for (idx c = 0; c < static_cast<idx>(cols); ++c) {
        double acc = y[static_cast<std::size_t>(c)];
        for (std::size_t r = 0; r < rows; ++r) {
            const double xr = x[r];
            if (xr == 0.0) continue;
            acc += a[r * cols + static_cast<std::size_t>(c)] * xr;
        }
        y[static_cast<std::size_t>(c)] = acc;
    }
}

void ger(std::span<double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
         std::span<const double> y) {
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
    for (idx r = 0; r < static_cast<idx>(rows); ++r) {
        const double xr = x[static_cast<std::size_t>(r)];
        if (xr == 0.0) continue;
        double* row = a.data() + static_cast<std::size_t>(r) * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += xr * y[c];
    }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
#pragma omp parallel for schedule(static) if (x.size() >= kParallelThreshold)
    for (idx i = 0; i < static_cast<idx>(x.size()); ++i) y[static_cast<std::size_t>(i)] += alpha * x[static_cast<std::size_t>(i)];
}

void scale(double alpha, std::span<double> x) {
#pragma omp parallel for schedule(static) if (x.size() >= kParallelThreshold)
    for (idx i = 0; i < static_cast<idx>(x.size()); ++i) x[static_cast<std::size_t>(i)] *= alpha;
}

void sum_buffers(std::span<const std::span<const double>> buffers, std::span<double> out) {
#pragma omp parallel for schedule(static) if (out.size() >= kParallelThreshold)
    for (idx i = 0; i < static_cast<idx>(out.size()); ++i) {
        double acc = 0.0;
        for (const auto& b : buffers) acc += b[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(i)] = acc;
    }
}

void adam_step(std::span<double> params, std::span<const double> grad, std::span<double> m, std::span<double> v,
               long t, const AdamHyper& hp) {
    const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
#pragma omp parallel for schedule(static) if (params.size() >= kParallelThreshold)
    for (idx k = 0; k < static_cast<idx>(params.size()); ++k) {
        const auto i = static_cast<std::size_t>(k);
        const double g = grad[i] + hp.weight_decay * params[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        params[i] -= hp.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + hp.eps);
    }
}

}  // namespace omp

}  // namespace vln::kernels
