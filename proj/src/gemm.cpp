#include "detail/gemm.hpp"

#include <Eigen/Core>

namespace ratfm::detail {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

template <class A, class B>
void assign(Map& out, const A& lhs, const B& rhs, double alpha, double beta) {
  if (beta == 0.0) {
    out.noalias() = alpha * (lhs * rhs);
  } else {
    if (beta != 1.0) out *= beta;
    out.noalias() += alpha * (lhs * rhs);
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, const double* b, double beta, double* c) {
  if (m == 0 || n == 0) return;
  const auto rm = static_cast<Eigen::Index>(m);
  const auto rn = static_cast<Eigen::Index>(n);
  const auto rk = static_cast<Eigen::Index>(k);
  Map out(c, rm, rn);
  if (k == 0) {
    if (beta == 0.0) out.setZero(); else out *= beta;
    return;
  }
  ConstMap lhs(a, trans_a ? rk : rm, trans_a ? rm : rk);
  ConstMap rhs(b, trans_b ? rn : rk, trans_b ? rk : rn);
  if (trans_a && trans_b) {
    assign(out, lhs.transpose(), rhs.transpose(), alpha, beta);
  } else if (trans_a) {
    assign(out, lhs.transpose(), rhs, alpha, beta);
  } else if (trans_b) {
    assign(out, lhs, rhs.transpose(), alpha, beta);
  } else {
    assign(out, lhs, rhs, alpha, beta);
  }
}

}  // namespace ratfm::detail
