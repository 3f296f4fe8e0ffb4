#include "sirbif/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

namespace sirbif::num {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill)
{
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
{
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
        if (row.size() != cols_)
            throw std::invalid_argument("Matrix: ragged initializer");
        data_.insert(data_.end(), row.begin(), row.end());
    }
}

Matrix Matrix::identity(std::size_t n)
{
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        m(i, i) = 1.0;
    return m;
}

Vector Matrix::operator*(std::span<const double> x) const
{
    if (x.size() != cols_)
        throw std::invalid_argument("Matrix * vector: dimension mismatch");
    Vector y(rows_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < cols_; ++j)
            acc += (*this)(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

Matrix Matrix::operator*(const Matrix& other) const
{
    if (cols_ != other.rows_)
        throw std::invalid_argument("Matrix * Matrix: dimension mismatch");
    Matrix out(rows_, other.cols_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t k = 0; k < cols_; ++k) {
            const double a = (*this)(i, k);
            for (std::size_t j = 0; j < other.cols_; ++j)
                out(i, j) += a * other(k, j);
        }
    return out;
}

double Matrix::max_abs() const noexcept
{
    double m = 0.0;
    for (double v : data_)
        m = std::max(m, std::abs(v));
    return m;
}

double norm_inf(std::span<const double> v) noexcept
{
    double m = 0.0;
    for (double x : v) {
        if (!std::isfinite(x))
            return std::numeric_limits<double>::infinity();
        m = std::max(m, std::abs(x));
    }
    return m;
}

// ---------------------------------------------------------------------------
// LU

LuFactorization::LuFactorization(Matrix a) : lu_(std::move(a))
{
    const std::size_t n = lu_.rows();
    if (lu_.cols() != n)
        throw std::invalid_argument("LuFactorization: matrix must be square");
    perm_.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        perm_[i] = i;

    const double scale = std::max(lu_.max_abs(), std::numeric_limits<double>::min());
    if (!std::isfinite(scale))
        throw SingularMatrix("LuFactorization: non-finite entries");

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::abs(lu_(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(lu_(i, k)) > best) {
                best = std::abs(lu_(i, k));
                piv = i;
            }
        }
        if (best < 1e-14 * scale)
            throw SingularMatrix("LuFactorization: pivot below 1e-14 in column " + std::to_string(k));
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j)
                std::swap(lu_(k, j), lu_(piv, j));
            std::swap(perm_[k], perm_[piv]);
            sign_ = -sign_;
        }
        const double inv = 1.0 / lu_(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double factor = lu_(i, k) * inv;
            lu_(i, k) = factor;
            if (factor == 0.0)
                continue;
            for (std::size_t j = k + 1; j < n; ++j)
                lu_(i, j) -= factor * lu_(k, j);
        }
    }
}

Vector LuFactorization::solve(std::span<const double> b) const
{
    const std::size_t n = lu_.rows();
    if (b.size() != n)
        throw std::invalid_argument("LuFactorization::solve: dimension mismatch");
    Vector x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = b[perm_[i]];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j)
            x[i] -= lu_(i, j) * x[j];
    for (std::size_t ii = n; ii-- > 0;) {
        for (std::size_t j = ii + 1; j < n; ++j)
            x[ii] -= lu_(ii, j) * x[j];
        x[ii] /= lu_(ii, ii);
    }
    return x;
}

double LuFactorization::determinant() const noexcept
{
    double d = sign_;
    for (std::size_t i = 0; i < lu_.rows(); ++i)
        d *= lu_(i, i);
    return d;
}

Vector solve_linear(const Matrix& a, std::span<const double> b)
{
    const LuFactorization lu(a);
    Vector x = lu.solve(b);
    Vector r = a * x;
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] = b[i] - r[i];
    const Vector dx = lu.solve(r);
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] += dx[i];
    return x;
}

// ---------------------------------------------------------------------------
// Eigenvalues

namespace {

// Roots of x^3 + a x^2 + b x + c.
std::vector<Complex> monic_cubic_roots(double a, double b, double c)
{
    const double q = (a * a - 3.0 * b) / 9.0;
    const double r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
    std::vector<Complex> roots;
    auto polish = [&](double x) {
        for (int it = 0; it < 3; ++it) {
            const double p = ((x + a) * x + b) * x + c;
            const double dp = (3.0 * x + 2.0 * a) * x + b;
            if (dp == 0.0)
                break;
            const double nx = x - p / dp;
            if (!std::isfinite(nx))
                break;
            x = nx;
        }
        return x;
    };
    if (r * r < q * q * q) {
        const double theta = std::acos(std::clamp(r / std::sqrt(q * q * q), -1.0, 1.0));
        const double sq = -2.0 * std::sqrt(q);
        for (int k = 0; k < 3; ++k)
            roots.emplace_back(polish(sq * std::cos((theta + 2.0 * std::numbers::pi * k) / 3.0) - a / 3.0),
                               0.0);
    } else {
        const double big_a =
            -std::copysign(std::cbrt(std::abs(r) + std::sqrt(r * r - q * q * q)), r);
        const double big_b = big_a != 0.0 ? q / big_a : 0.0;
        const double re = -0.5 * (big_a + big_b) - a / 3.0;
        const double im = 0.5 * std::sqrt(3.0) * (big_a - big_b);
        roots.emplace_back(polish(big_a + big_b - a / 3.0), 0.0);
        if (im == 0.0) {
            roots.emplace_back(re, 0.0);
            roots.emplace_back(re, 0.0);
        } else {
            roots.emplace_back(re, std::abs(im));
            roots.emplace_back(re, -std::abs(im));
        }
    }
    return roots;
}

// Balancing and Hessenberg QR below use 1-based indexing through this view so
// the loops read like the classical EISPACK formulations.
struct OneBased {
    Matrix& m;
    double& operator()(int i, int j) { return m(static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1)); }
};

void balance(Matrix& mat)
{
    constexpr double radix = 2.0;
    constexpr double sqrdx = radix * radix;
    const int n = static_cast<int>(mat.rows());
    OneBased a{mat};
    bool done = false;
    while (!done) {
        done = true;
        for (int i = 1; i <= n; ++i) {
            double r = 0.0, c = 0.0;
            for (int j = 1; j <= n; ++j)
                if (j != i) {
                    c += std::abs(a(j, i));
                    r += std::abs(a(i, j));
                }
            if (c != 0.0 && r != 0.0) {
                double g = r / radix;
                double f = 1.0;
                const double s = c + r;
                while (c < g) {
                    f *= radix;
                    c *= sqrdx;
                }
                g = r * radix;
                while (c > g) {
                    f /= radix;
                    c /= sqrdx;
                }
                if ((c + r) / f < 0.95 * s) {
                    done = false;
                    g = 1.0 / f;
                    for (int j = 1; j <= n; ++j)
                        a(i, j) *= g;
                    for (int j = 1; j <= n; ++j)
                        a(j, i) *= f;
                }
            }
        }
    }
}

void to_hessenberg(Matrix& mat)
{
    const int n = static_cast<int>(mat.rows());
    OneBased a{mat};
    for (int m = 2; m < n; ++m) {
        double x = 0.0;
        int i = m;
        for (int j = m; j <= n; ++j)
            if (std::abs(a(j, m - 1)) > std::abs(x)) {
                x = a(j, m - 1);
                i = j;
            }
        if (i != m) {
            for (int j = m - 1; j <= n; ++j)
                std::swap(a(i, j), a(m, j));
            for (int j = 1; j <= n; ++j)
                std::swap(a(j, i), a(j, m));
        }
        if (x != 0.0) {
            for (i = m + 1; i <= n; ++i) {
                double y = a(i, m - 1);
                if (y != 0.0) {
                    y /= x;
                    a(i, m - 1) = y;
                    for (int j = m; j <= n; ++j)
                        a(i, j) -= y * a(m, j);
                    for (int j = 1; j <= n; ++j)
                        a(j, m) += y * a(j, i);
                }
            }
        }
    }
    for (int i = 3; i <= n; ++i)
        for (int j = 1; j <= i - 2; ++j)
            a(i, j) = 0.0;
}

std::vector<Complex> hessenberg_qr(Matrix& mat)
{
    const int n = static_cast<int>(mat.rows());
    OneBased a{mat};
    std::vector<double> wr(static_cast<std::size_t>(n + 1)), wi(static_cast<std::size_t>(n + 1));
    auto sign = [](double x, double y) { return y >= 0.0 ? std::abs(x) : -std::abs(x); };

    double anorm = 0.0;
    for (int i = 1; i <= n; ++i)
        for (int j = std::max(i - 1, 1); j <= n; ++j)
            anorm += std::abs(a(i, j));

    int nn = n;
    double t = 0.0;
    double p = 0, q = 0, r = 0, s = 0, w = 0, x = 0, y = 0, z = 0;
    while (nn >= 1) {
        int its = 0;
        int l = 0;
        do {
            for (l = nn; l >= 2; --l) {
                s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
                if (s == 0.0)
                    s = anorm;
                if (std::abs(a(l, l - 1)) + s == s) {
                    a(l, l - 1) = 0.0;
                    break;
                }
            }
            x = a(nn, nn);
            if (l == nn) {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                --nn;
            } else {
                y = a(nn - 1, nn - 1);
                w = a(nn, nn - 1) * a(nn - 1, nn);
                if (l == nn - 1) {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = std::sqrt(std::abs(q));
                    x += t;
                    if (q >= 0.0) {
                        z = p + sign(z, p);
                        wr[nn - 1] = wr[nn] = x + z;
                        if (z != 0.0)
                            wr[nn] = x - w / z;
                        wi[nn - 1] = wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = wr[nn] = x + p;
                        wi[nn] = z;
                        wi[nn - 1] = -z;
                    }
                    nn -= 2;
                } else {
                    if (its == 60)
                        throw std::runtime_error("eigvals_general: QR iteration did not converge");
                    if (its == 10 || its == 20) {
                        t += x;
                        for (int i = 1; i <= nn; ++i)
                            a(i, i) -= x;
                        s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
                        y = x = 0.75 * s;
                        w = -0.4375 * s * s;
                    }
                    ++its;
                    int m = nn - 2;
                    for (; m >= l; --m) {
                        z = a(m, m);
                        r = x - z;
                        s = y - z;
                        p = (r * s - w) / a(m + 1, m) + a(m, m + 1);
                        q = a(m + 1, m + 1) - z - r - s;
                        r = a(m + 2, m + 1);
                        s = std::abs(p) + std::abs(q) + std::abs(r);
                        p /= s;
                        q /= s;
                        r /= s;
                        if (m == l)
                            break;
                        const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
                        const double v =
                            std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
                        if (u + v == v)
                            break;
                    }
                    for (int i = m + 2; i <= nn; ++i) {
                        a(i, i - 2) = 0.0;
                        if (i != m + 2)
                            a(i, i - 3) = 0.0;
                    }
                    for (int k = m; k <= nn - 1; ++k) {
                        if (k != m) {
                            p = a(k, k - 1);
                            q = a(k + 1, k - 1);
                            r = 0.0;
                            if (k != nn - 1)
                                r = a(k + 2, k - 1);
                            if ((x = std::abs(p) + std::abs(q) + std::abs(r)) != 0.0) {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        if ((s = sign(std::sqrt(p * p + q * q + r * r), p)) != 0.0) {
                            if (k == m) {
                                if (l != m)
                                    a(k, k - 1) = -a(k, k - 1);
                            } else {
                                a(k, k - 1) = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for (int j = k; j <= nn; ++j) {
                                p = a(k, j) + q * a(k + 1, j);
                                if (k != nn - 1) {
                                    p += r * a(k + 2, j);
                                    a(k + 2, j) -= p * z;
                                }
                                a(k + 1, j) -= p * y;
                                a(k, j) -= p * x;
                            }
                            const int mmin = nn < k + 3 ? nn : k + 3;
                            for (int i = l; i <= mmin; ++i) {
                                p = x * a(i, k) + y * a(i, k + 1);
                                if (k != nn - 1) {
                                    p += z * a(i, k + 2);
                                    a(i, k + 2) -= p * r;
                                }
                                a(i, k + 1) -= p * q;
                                a(i, k) -= p;
                            }
                        }
                    }
                }
            }
        } while (l < nn - 1);
    }
    std::vector<Complex> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i)
        out.emplace_back(wr[static_cast<std::size_t>(i)], wi[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace

std::vector<Complex> eigvals_small(const Matrix& a)
{
    if (a.rows() != a.cols())
        throw std::invalid_argument("eigvals_small: matrix must be square");
    if (a.rows() == 2) {
        const double tr = a(0, 0) + a(1, 1);
        const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
        const double half = 0.5 * tr;
        // Discriminant from the entries avoids cancellation in tr^2/4 - det.
        const double diff = 0.5 * (a(0, 0) - a(1, 1));
        const double disc = diff * diff + a(0, 1) * a(1, 0);
        if (disc >= 0.0) {
            const double root = std::sqrt(disc);
            const double big = half + std::copysign(root, half == 0.0 ? 1.0 : half);
            const double small = big != 0.0 ? det / big : half - std::copysign(root, half);
            std::vector<Complex> ev{{big, 0.0}, {small, 0.0}};
            std::sort(ev.begin(), ev.end(), [](Complex l, Complex r) { return l.real() > r.real(); });
            return ev;
        }
        const double im = std::sqrt(-disc);
        return {{half, im}, {half, -im}};
    }
    if (a.rows() == 3) {
        const double tr = a(0, 0) + a(1, 1) + a(2, 2);
        const double minors = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0) + a(0, 0) * a(2, 2) -
                              a(0, 2) * a(2, 0) + a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
        const double det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
                           a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
                           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
        return monic_cubic_roots(-tr, minors, -det);
    }
    throw std::invalid_argument("eigvals_small: only 2x2 and 3x3 matrices are supported");
}

std::vector<Complex> eigvals_general(Matrix a)
{
    if (a.rows() != a.cols())
        throw std::invalid_argument("eigvals_general: matrix must be square");
    if (a.rows() == 0)
        return {};
    if (a.rows() == 1)
        return {{a(0, 0), 0.0}};
    balance(a);
    to_hessenberg(a);
    return hessenberg_qr(a);
}

// ---------------------------------------------------------------------------
// Newton

NewtonReport newton(const VectorFunction& f, const MatrixFunction& jac, Vector x0, double tol, int max_iter)
{
    NewtonReport rep;
    rep.root = std::move(x0);
    Vector fx;
    try {
        fx = f(rep.root);
    } catch (const std::exception&) {
        rep.residual_norm = std::numeric_limits<double>::infinity();
        return rep;
    }
    rep.residual_norm = norm_inf(fx);
    while (std::isfinite(rep.residual_norm) && rep.residual_norm > tol && rep.iterations < max_iter) {
        ++rep.iterations;
        Vector dx;
        try {
            dx = solve_linear(jac(rep.root), fx);
        } catch (const std::exception&) {
            return rep;
        }
        double step = 1.0;
        Vector trial(rep.root.size());
        Vector ftrial;
        double trial_norm = std::numeric_limits<double>::infinity();
        for (int halving = 0; halving <= 8; ++halving) {
            for (std::size_t i = 0; i < trial.size(); ++i)
                trial[i] = rep.root[i] - step * dx[i];
            try {
                ftrial = f(trial);
                trial_norm = norm_inf(ftrial);
            } catch (const std::exception&) {
                trial_norm = std::numeric_limits<double>::infinity();
            }
            if (trial_norm < rep.residual_norm)
                break;
            step *= 0.5;
        }
        if (!std::isfinite(trial_norm))
            return rep;
        rep.root = trial;
        fx = std::move(ftrial);
        rep.residual_norm = trial_norm;
    }
    rep.converged = std::isfinite(rep.residual_norm) && rep.residual_norm <= tol;
    return rep;
}

// ---------------------------------------------------------------------------
// Polynomials

double poly_eval(std::span<const double> coeffs, double x)
{
    double acc = 0.0;
    for (std::size_t i = coeffs.size(); i-- > 0;)
        acc = acc * x + coeffs[i];
    return acc;
}

std::vector<double> poly_real_roots(std::span<const double> coeffs)
{
    std::size_t n = coeffs.size();
    while (n > 0 && coeffs[n - 1] == 0.0)
        --n;
    if (n < 2)
        throw std::invalid_argument("poly_real_roots: polynomial degree must be at least 1");
    const std::size_t degree = n - 1;
    const std::span<const double> c = coeffs.first(n);
    double scale = 0.0;
    for (double v : c)
        scale = std::max(scale, std::abs(v));

    std::vector<double> deriv(degree);
    for (std::size_t i = 1; i <= degree; ++i)
        deriv[i - 1] = static_cast<double>(i) * c[i];

    std::vector<Complex> candidates;
    if (degree == 1) {
        candidates.emplace_back(-c[0] / c[1], 0.0);
    } else {
        Matrix companion(degree, degree);
        for (std::size_t j = 0; j < degree; ++j)
            companion(0, j) = -c[degree - 1 - j] / c[degree];
        for (std::size_t i = 1; i < degree; ++i)
            companion(i, i - 1) = 1.0;
        candidates = eigvals_general(std::move(companion));
    }

    std::vector<double> roots;
    for (const Complex& z : candidates) {
        const double mag = 1.0 + std::abs(z);
        if (std::abs(z.imag()) > 1e-6 * mag)
            continue;
        double x = z.real();
        for (int it = 0; it < 50; ++it) {
            const double p = poly_eval(c, x);
            const double dp = poly_eval(deriv, x);
            if (p == 0.0 || dp == 0.0)
                break;
            const double nx = x - p / dp;
            if (!std::isfinite(nx) || std::abs(nx - x) <= 1e-15 * std::abs(x))
                break;
            x = nx;
        }
        // A nearly-real complex pair is kept only if it sits on a genuine
        // (multiple) real root.
        const double pscale = scale * std::pow(mag, static_cast<double>(degree));
        if (std::abs(z.imag()) > 0.0 && std::abs(poly_eval(c, x)) > 1e-10 * pscale)
            continue;
        roots.push_back(x);
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

}  // namespace sirbif::num
