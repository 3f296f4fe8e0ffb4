#include "cli_internal.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>
#include <unistd.h>

namespace sirbif::cli {

std::string fmt9(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v == 0.0 ? 0.0 : v);  // no "-0"
    return buf;
}

void write_atomic(const std::string& path, const std::string& content)
{
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path())
        fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw fs::filesystem_error("cannot write", tmp, std::make_error_code(std::errc::io_error));
        out << content;
        out.flush();
        if (!out)
            throw fs::filesystem_error("write failed", tmp, std::make_error_code(std::errc::io_error));
    }
    fs::rename(tmp, target);
}

namespace detail {

json num(double v)
{
    if (!std::isfinite(v))
        return nullptr;
    return std::stod(fmt9(v));
}

json special_json(const contin::SpecialPoint& sp)
{
    json aux = json::object();
    for (const auto& [k, v] : sp.aux)
        aux[k] = num(v);
    return {{"kind", std::string(contin::to_string(sp.kind))},
            {"gamma", num(sp.gamma)},
            {"rho", num(sp.rho)},
            {"S", num(sp.state[0])},
            {"I", num(sp.state[1])},
            {"aux", aux}};
}

json params_json(const Params& p)
{
    return {{"beta", num(p.beta)},   {"lambda", num(p.lambda)}, {"mu", num(p.mu)},  {"mu_prime", num(p.mu_prime)},
            {"alpha", num(p.alpha)}, {"gamma", num(p.gamma)},   {"rho", num(p.rho)}};
}

std::string branch_csv(const std::vector<CsvRow>& rows, const Params& base)
{
    std::string out = "idx,gamma,rho,S,I,test_fold,test_hopf,eig1_re,eig1_im,eig2_re,eig2_im,point_type\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const CsvRow& r = rows[i];
        Params p = base;
        p.gamma = r.gamma;
        p.rho = r.rho;
        const auto j = model::jacobian_reduced(r.state, p);
        auto ev = model::eigenvalues(j);
        ev.resize(2);
        out += std::to_string(i) + ',' + fmt9(r.gamma) + ',' + fmt9(r.rho) + ',' + fmt9(r.state[0]) + ',' +
               fmt9(r.state[1]) + ',' + fmt9(model::det(j)) + ',' + fmt9(model::trace(j)) + ',' +
               fmt9(ev[0].real()) + ',' + fmt9(ev[0].imag()) + ',' + fmt9(ev[1].real()) + ',' +
               fmt9(ev[1].imag()) + ',' + r.type + '\n';
    }
    return out;
}

std::string stem(const RunConfig& cfg, const std::string& fallback)
{
    if (!cfg.name.empty())
        return cfg.name;
    return cfg.preset ? *cfg.preset + "-" + fallback : fallback;
}

std::string path_in(const RunConfig& cfg, const std::string& file)
{
    return (std::filesystem::path(cfg.out_dir) / file).string();
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body)
{
    unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n && !failed; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    if (!failed.exchange(true))
                        failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

namespace {

constexpr double width = 820.0, height = 620.0;
constexpr double left = 90.0, right = 170.0, top = 50.0, bottom = 70.0;

std::string px_str(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

/// Round tick spacing of 1, 2 or 5 times a power of ten.
double tick_step(double span)
{
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0})
        if (raw <= m * mag)
            return m * mag;
    return 10.0 * mag;
}

std::string tick_label(double v, double step)
{
    const int decimals = std::max(0, -static_cast<int>(std::floor(std::log10(step) + 1e-9)));
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, std::abs(v) < 1e-12 * step ? 0.0 : v);
    return buf;
}

}  // namespace

SvgPlot::SvgPlot(double x0, double x1, double y0, double y1, std::string x_label, std::string y_label,
                 std::string title)
    : x0_(x0), x1_(x1), y0_(y0), y1_(y1), x_label_(std::move(x_label)), y_label_(std::move(y_label)),
      title_(std::move(title))
{
}

double SvgPlot::px(double x) const { return left + (x - x0_) / (x1_ - x0_) * (width - left - right); }
bool SvgPlot::inside(double x, double y) const { return x >= x0_ && x <= x1_ && y >= y0_ && y <= y1_; }
double SvgPlot::py(double y) const { return height - bottom - (y - y0_) / (y1_ - y0_) * (height - top - bottom); }

void SvgPlot::polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double w,
                       const std::string& dash)
{
    if (pts.size() < 2)
        return;
    // Skip curves whose bounding box misses the window entirely.
    double xa = pts[0].first, xb = xa, ya = pts[0].second, yb = ya;
    for (const auto& [x, y] : pts) {
        xa = std::min(xa, x);
        xb = std::max(xb, x);
        ya = std::min(ya, y);
        yb = std::max(yb, y);
    }
    if (xb < x0_ || xa > x1_ || yb < y0_ || ya > y1_)
        return;
    body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + px_str(w) + "\"";
    if (!dash.empty())
        body_ += " stroke-dasharray=\"" + dash + "\"";
    body_ += " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i)
            body_ += ' ';
        body_ += px_str(px(pts[i].first)) + ',' + px_str(py(pts[i].second));
    }
    body_ += "\"/>\n";
}

void SvgPlot::marker(double x, double y, const std::string& shape, const std::string& fill,
                     const std::string& stroke, double size)
{
    if (!inside(x, y))
        return;
    const double cx = px(x), cy = py(y);
    if (shape == "square")
        body_ += "<rect x=\"" + px_str(cx - size) + "\" y=\"" + px_str(cy - size) + "\" width=\"" +
                 px_str(2 * size) + "\" height=\"" + px_str(2 * size) + "\"";
    else if (shape == "diamond")
        body_ += "<polygon points=\"" + px_str(cx) + ',' + px_str(cy - size) + ' ' + px_str(cx + size) + ',' +
                 px_str(cy) + ' ' + px_str(cx) + ',' + px_str(cy + size) + ' ' + px_str(cx - size) + ',' +
                 px_str(cy) + "\"";
    else
        body_ += "<circle cx=\"" + px_str(cx) + "\" cy=\"" + px_str(cy) + "\" r=\"" + px_str(size) + "\"";
    body_ += " fill=\"" + fill + "\" stroke=\"" + stroke + "\" stroke-width=\"1.2\"/>\n";
}

void SvgPlot::label(double x, double y, const std::string& text, const std::string& color)
{
    if (!inside(x, y))
        return;
    body_ += "<text x=\"" + px_str(px(x) + 7) + "\" y=\"" + px_str(py(y) - 7) +
             "\" font-family=\"sans-serif\" font-size=\"13\" fill=\"" + color + "\">" + xml_escape(text) +
             "</text>\n";
}

void SvgPlot::cell(double xa, double ya, double xb, double yb, const std::string& fill)
{
    const double l = std::min(px(xa), px(xb)), r = std::max(px(xa), px(xb));
    const double t = std::min(py(ya), py(yb)), b = std::max(py(ya), py(yb));
    cells_ += "<rect x=\"" + px_str(l) + "\" y=\"" + px_str(t) + "\" width=\"" + px_str(r - l) + "\" height=\"" +
              px_str(b - t) + "\" fill=\"" + fill + "\"/>\n";
}

void SvgPlot::legend(const std::vector<std::pair<std::string, std::string>>& entries)
{
    double y = top + 10.0;
    const double x = width - right + 15.0;
    for (const auto& [color, text] : entries) {
        legend_ += "<line x1=\"" + px_str(x) + "\" y1=\"" + px_str(y) + "\" x2=\"" + px_str(x + 22) + "\" y2=\"" +
                   px_str(y) + "\" stroke=\"" + color + "\" stroke-width=\"3\"/>\n";
        legend_ += "<text x=\"" + px_str(x + 28) + "\" y=\"" + px_str(y + 4) +
                   "\" font-family=\"sans-serif\" font-size=\"12\">" + xml_escape(text) + "</text>\n";
        y += 20.0;
    }
}

std::string SvgPlot::str() const
{
    const double pl = left, pr = width - right, pt = top, pb = height - bottom;
    std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + px_str(width) + "\" height=\"" +
         px_str(height) + "\" viewBox=\"0 0 " + px_str(width) + ' ' + px_str(height) + "\">\n";
    s += "<title>" + xml_escape(title_) + "</title>\n";
    s += "<defs><clipPath id=\"plot-area\"><rect x=\"" + px_str(pl) + "\" y=\"" + px_str(pt) + "\" width=\"" +
         px_str(pr - pl) + "\" height=\"" + px_str(pb - pt) + "\"/></clipPath></defs>\n";
    s += "<rect x=\"0\" y=\"0\" width=\"" + px_str(width) + "\" height=\"" + px_str(height) + "\" fill=\"white\"/>\n";
    s += "<g clip-path=\"url(#plot-area)\">\n" + cells_ + body_ + "</g>\n";
    s += "<rect x=\"" + px_str(pl) + "\" y=\"" + px_str(pt) + "\" width=\"" + px_str(pr - pl) + "\" height=\"" +
         px_str(pb - pt) + "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
    s += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
    const double sx = tick_step(x1_ - x0_), sy = tick_step(y1_ - y0_);
    for (double v = std::ceil(x0_ / sx - 1e-9) * sx; v <= x1_ + 1e-9 * sx; v += sx) {
        const double x = px(v);
        s += "<line x1=\"" + px_str(x) + "\" y1=\"" + px_str(pb) + "\" x2=\"" + px_str(x) + "\" y2=\"" +
             px_str(pb + 6) + "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + px_str(x) + "\" y=\"" + px_str(pb + 20) + "\" text-anchor=\"middle\">" +
             tick_label(v, sx) + "</text>\n";
    }
    for (double v = std::ceil(y0_ / sy - 1e-9) * sy; v <= y1_ + 1e-9 * sy; v += sy) {
        const double y = py(v);
        s += "<line x1=\"" + px_str(pl - 6) + "\" y1=\"" + px_str(y) + "\" x2=\"" + px_str(pl) + "\" y2=\"" +
             px_str(y) + "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + px_str(pl - 9) + "\" y=\"" + px_str(y + 4) + "\" text-anchor=\"end\">" +
             tick_label(v, sy) + "</text>\n";
    }
    s += "<text x=\"" + px_str(0.5 * (pl + pr)) + "\" y=\"" + px_str(height - 20) +
         "\" text-anchor=\"middle\" font-size=\"15\">" + xml_escape(x_label_) + "</text>\n";
    s += "<text x=\"22\" y=\"" + px_str(0.5 * (pt + pb)) + "\" text-anchor=\"middle\" font-size=\"15\" transform=\"rotate(-90 22 " +
         px_str(0.5 * (pt + pb)) + ")\">" + xml_escape(y_label_) + "</text>\n";
    s += "<text x=\"" + px_str(0.5 * (pl + pr)) + "\" y=\"30\" text-anchor=\"middle\" font-size=\"15\">" +
         xml_escape(title_) + "</text>\n";
    s += legend_;
    s += "</g>\n</svg>\n";
    return s;
}

}  // namespace detail

}  // namespace sirbif::cli
