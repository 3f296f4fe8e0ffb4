#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sirbif::num {

using Vector = std::vector<double>;
using Complex = std::complex<double>;

/// Dense row-major matrix. Sized for the small systems that appear in
/// continuation and shooting (at most a few dozen unknowns).
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<const double> data() const noexcept { return data_; }

    Vector operator*(std::span<const double> x) const;
    Matrix operator*(const Matrix& other) const;

    double max_abs() const noexcept;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

class SingularMatrix : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// LU factorization with partial pivoting. Throws SingularMatrix when a pivot
/// falls below 1e-14 relative to the largest entry of A.
class LuFactorization {
public:
    explicit LuFactorization(Matrix a);

    Vector solve(std::span<const double> b) const;
    double determinant() const noexcept;
    std::size_t size() const noexcept { return lu_.rows(); }

private:
    Matrix lu_;
    std::vector<std::size_t> perm_;
    int sign_ = 1;
};

/// Solves A x = b, with one round of iterative refinement.
Vector solve_linear(const Matrix& a, std::span<const double> b);

/// Eigenvalues of a 2x2 or 3x3 matrix from the characteristic polynomial.
std::vector<Complex> eigvals_small(const Matrix& a);

/// Eigenvalues of a general real square matrix (balanced Hessenberg QR).
std::vector<Complex> eigvals_general(Matrix a);

struct NewtonReport {
    Vector root;
    double residual_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

using VectorFunction = std::function<Vector(std::span<const double>)>;
using MatrixFunction = std::function<Matrix(std::span<const double>)>;

/// Damped Newton iteration with step halving (at most 8 halvings per step).
/// Never throws on numerical trouble; failures are reported through the
/// `converged` flag.
NewtonReport newton(const VectorFunction& f, const MatrixFunction& jac, Vector x0, double tol,
                    int max_iter);

/// Real roots of c[0] + c[1] x + ... + c[n] x^n in ascending order, with
/// multiplicity. Roots come from the companion matrix and are refined by Newton.
std::vector<double> poly_real_roots(std::span<const double> coeffs);

/// Horner evaluation, coefficients in ascending powers.
double poly_eval(std::span<const double> coeffs, double x);

double norm_inf(std::span<const double> v) noexcept;

}  // namespace sirbif::num
