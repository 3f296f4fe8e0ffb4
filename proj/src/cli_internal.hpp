#pragma once

// Shared plumbing of the command implementations.

#include "sirbif/cli.hpp"

#include <functional>
#include <string>
#include <vector>

namespace sirbif::cli::detail {

/// JSON number rounded to 9 significant digits (NaN and infinities become null).
json num(double v);
json special_json(const contin::SpecialPoint& sp);
json params_json(const Params& p);

struct CsvRow {
    double gamma = 0.0, rho = 0.0;
    model::State2 state{};
    std::string type;  // blank or LP/HB/BP/BT/GH/HOM/LPC
};

/// Branch CSV with det/trace/eigenvalues evaluated at each row.
std::string branch_csv(const std::vector<CsvRow>& rows, const Params& base);

std::string stem(const RunConfig& cfg, const std::string& fallback);
std::string path_in(const RunConfig& cfg, const std::string& file);

/// Runs body(i) for i in [0, n) on up to `threads` workers (0 = hardware).
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

/// Minimal SVG 1.1 plot: a data window mapped onto a framed plot area.
class SvgPlot {
public:
    SvgPlot(double x0, double x1, double y0, double y1, std::string x_label, std::string y_label,
            std::string title);

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width,
                  const std::string& dash = "");
    /// Markers and labels outside the window are dropped.
    void marker(double x, double y, const std::string& shape, const std::string& fill, const std::string& stroke,
                double size);
    void label(double x, double y, const std::string& text, const std::string& color);
    void cell(double x0, double y0, double x1, double y1, const std::string& fill);
    void legend(const std::vector<std::pair<std::string, std::string>>& entries);  // (color, text)

    std::string str() const;

private:
    double px(double x) const;
    double py(double y) const;
    bool inside(double x, double y) const;

    double x0_, x1_, y0_, y1_;
    std::string x_label_, y_label_, title_;
    std::string cells_, body_, legend_;
};

std::string xml_escape(const std::string& s);

/// Hopf curve split into pieces of constant l1 sign (true: l1 > 0). Adjacent
/// pieces share their end vertex, which is the GH point when one was detected.
std::vector<std::pair<std::vector<std::pair<double, double>>, bool>> hopf_pieces(const codim2::Codim2Curve& c);

}  // namespace sirbif::cli::detail
