#include "nccqr/kernels.hpp"

namespace nccqr::kernels::reference {

void affine_forward(const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                    const Eigen::MatrixXd& in, Eigen::MatrixXd& out) {
  out.resize(W.rows(), in.cols());
  for (Eigen::Index s = 0; s < in.cols(); ++s) {
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      double acc = b(i);
      for (Eigen::Index k = 0; k < W.cols(); ++k) acc += W(i, k) * in(k, s);
      out(i, s) = acc;
    }
  }
}

void relu_forward(const Eigen::MatrixXd& pre, Eigen::MatrixXd& act) {
  act.resize(pre.rows(), pre.cols());
  for (Eigen::Index s = 0; s < pre.cols(); ++s)
    for (Eigen::Index i = 0; i < pre.rows(); ++i) act(i, s) = pre(i, s) > 0.0 ? pre(i, s) : 0.0;
}

void relu_backward(const Eigen::MatrixXd& pre, Eigen::MatrixXd& grad) {
  for (Eigen::Index s = 0; s < pre.cols(); ++s)
    for (Eigen::Index i = 0; i < pre.rows(); ++i)
      if (!(pre(i, s) > 0.0)) grad(i, s) = 0.0;
}

void affine_backward(const Eigen::MatrixXd& W, const Eigen::MatrixXd& in,
                     const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_W,
                     Eigen::VectorXd& grad_b, Eigen::MatrixXd* grad_in) {
  grad_W.setZero(W.rows(), W.cols());
  grad_b.setZero(W.rows());
  for (Eigen::Index s = 0; s < in.cols(); ++s) {
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      const double g = grad_out(i, s);
      grad_b(i) += g;
      for (Eigen::Index k = 0; k < W.cols(); ++k) grad_W(i, k) += g * in(k, s);
    }
  }
  if (grad_in == nullptr) return;
  grad_in->setZero(W.cols(), in.cols());
  for (Eigen::Index s = 0; s < in.cols(); ++s)
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index k = 0; k < W.cols(); ++k) (*grad_in)(k, s) += W(i, k) * grad_out(i, s);
}

}  // namespace nccqr::kernels::reference
