#pragma once

#include <cstddef>
#include <span>

// Dense kernels used by the seq2seq agent and its optimiser. Every kernel
// has a plain serial version, kept as the reference the OpenMP versions are
// tested against. Matrices are row-major.

namespace vln::kernels {

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // L2 term added to the gradient
};

namespace serial {

/// y = A x  (A is rows x cols)
void gemv(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y);
/// y = A x + b
void gemv_bias(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
               std::span<const double> b, std::span<double> y);
/// y += A^T x  (x has `rows` entries, y has `cols`)
void gemv_t_acc(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
                std::span<double> y);
/// A += x y^T
void ger(std::span<double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
         std::span<const double> y);
/// y += alpha x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scale(double alpha, std::span<double> x);
/// out = sum of equally sized buffers
void sum_buffers(std::span<const std::span<const double>> buffers, std::span<double> out);
/// One Adam step (t is the 1-based step count).
void adam_step(std::span<double> params, std::span<const double> grad, std::span<double> m, std::span<double> v,
               long t, const AdamHyper& hp);

}  // namespace serial

namespace omp {

void gemv(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y);
void gemv_bias(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
               std::span<const double> b, std::span<double> y);
void gemv_t_acc(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
                std::span<double> y);
void ger(std::span<double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
         std::span<const double> y);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scale(double alpha, std::span<double> x);
void sum_buffers(std::span<const std::span<const double>> buffers, std::span<double> out);
void adam_step(std::span<double> params, std::span<const double> grad, std::span<double> m, std::span<double> v,
               long t, const AdamHyper& hp);

}  // namespace omp

int max_threads();

}  // namespace vln::kernels
