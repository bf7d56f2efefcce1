#pragma once

// Dense-layer kernels for the quantile network. Matrices hold one sample per
// column. The default namespace runs sample blocks in parallel with OpenMP
// and Eigen products inside each block; `reference` is the plain-loop serial
// version the tests and benchmark compare against.
//
// Block boundaries depend only on the column count, and partial reductions
// are summed in block order, so results are identical for any thread count.

#include <Eigen/Dense>

namespace nccqr::kernels {

inline constexpr Eigen::Index kBlockCols = 256;

/// out = W * in + b (b broadcast across columns).
void affine_forward(const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                    const Eigen::MatrixXd& in, Eigen::MatrixXd& out);

/// act = max(pre, 0).
void relu_forward(const Eigen::MatrixXd& pre, Eigen::MatrixXd& act);

/// grad(i,j) = 0 wherever pre(i,j) <= 0.
void relu_backward(const Eigen::MatrixXd& pre, Eigen::MatrixXd& grad);

/// grad_W = grad_out * in^T, grad_b = row sums of grad_out,
/// grad_in = W^T * grad_out when grad_in is non-null.
void affine_backward(const Eigen::MatrixXd& W, const Eigen::MatrixXd& in,
                     const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_W,
                     Eigen::VectorXd& grad_b, Eigen::MatrixXd* grad_in);

namespace reference {

void affine_forward(const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                    const Eigen::MatrixXd& in, Eigen::MatrixXd& out);
void relu_forward(const Eigen::MatrixXd& pre, Eigen::MatrixXd& act);
void relu_backward(const Eigen::MatrixXd& pre, Eigen::MatrixXd& grad);
void affine_backward(const Eigen::MatrixXd& W, const Eigen::MatrixXd& in,
                     const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_W,
                     Eigen::VectorXd& grad_b, Eigen::MatrixXd* grad_in);

}  // namespace reference

}  // namespace nccqr::kernels
