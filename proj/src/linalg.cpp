#include "amimic/linalg.hpp"

#include <Eigen/SVD>

#include "amimic/error.hpp"

namespace amimic {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix from_eigen(const Eigen::MatrixXd& m) {
  Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  Eigen::Map<RowMajor>(out.data().data(), m.rows(), m.cols()) = m;
  return out;
}

}  // namespace

SvdResult svd(const Matrix& a) {
  if (a.rows() != a.cols()) throw Error(ErrorKind::invalid_input, "svd expects a square matrix");
  const auto n = static_cast<Eigen::Index>(a.rows());
  const Eigen::MatrixXd m = Eigen::Map<const RowMajor>(a.data().data(), n, n);
  const Eigen::JacobiSVD<Eigen::MatrixXd> s(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  SvdResult out;
  out.converged = s.info() == Eigen::Success;
  out.U = from_eigen(s.matrixU());
  out.V = from_eigen(s.matrixV());
  out.singular_values.assign(s.singularValues().data(), s.singularValues().data() + n);
  return out;
}

}  // namespace amimic
