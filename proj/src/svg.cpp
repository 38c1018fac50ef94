#include "stoptree/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stoptree {

namespace {

struct BoxStats {
    double lo_whisker, q1, med, q3, hi_whisker;
};

double quantile(const std::vector<double>& sorted, double p) {
    const size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = p * (n - 1);
    const size_t i = static_cast<size_t>(h);
    if (i + 1 >= n) return sorted[n - 1];
    const double w = h - i;
    return sorted[i] * (1.0 - w) + sorted[i + 1] * w;
}

BoxStats box_stats(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    BoxStats b{};
    b.q1 = quantile(v, 0.25);
    b.med = quantile(v, 0.5);
    b.q3 = quantile(v, 0.75);
    const double iqr = b.q3 - b.q1;
    // whiskers: extreme data points within 1.5 IQR of the box
    b.lo_whisker = b.q1;
    b.hi_whisker = b.q3;
    for (double x : v) {
        if (x >= b.q1 - 1.5 * iqr) {
            b.lo_whisker = x;
            break;
        }
    }
    for (auto it = v.rbegin(); it != v.rend(); ++it) {
        if (*it <= b.q3 + 1.5 * iqr) {
            b.hi_whisker = *it;
            break;
        }
    }
    return b;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

} // namespace

std::string boxplot_svg(const std::string& title, const std::vector<std::string>& labels,
                        const std::vector<std::vector<double>>& samples) {
    if (labels.size() != samples.size() || samples.empty())
        throw std::invalid_argument("boxplot_svg: labels/samples mismatch");

    const int width = 120 + static_cast<int>(samples.size()) * 110;
    const int height = 420;
    const double plot_left = 70, plot_right = width - 30;
    const double plot_top = 50, plot_bottom = height - 60;

    double vmin = 1e300, vmax = -1e300;
    std::vector<BoxStats> stats;
    for (const auto& s : samples) {
        if (s.empty()) throw std::invalid_argument("boxplot_svg: empty sample");
        stats.push_back(box_stats(s));
        vmin = std::min(vmin, stats.back().lo_whisker);
        vmax = std::max(vmax, stats.back().hi_whisker);
    }
    if (vmax <= vmin) vmax = vmin + 1.0;
    const double pad = 0.06 * (vmax - vmin);
    vmin -= pad;
    vmax += pad;
    auto ypix = [&](double v) {
        return plot_bottom - (v - vmin) / (vmax - vmin) * (plot_bottom - plot_top);
    };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\" "
           "text-anchor=\"middle\">" << title << "</text>\n";

    // y axis with 5 ticks
    svg << "<line x1=\"" << plot_left << "\" y1=\"" << plot_top << "\" x2=\"" << plot_left
        << "\" y2=\"" << plot_bottom << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        const double v = vmin + (vmax - vmin) * t / 5.0;
        const double y = ypix(v);
        svg << "<line x1=\"" << plot_left - 5 << "\" y1=\"" << y << "\" x2=\"" << plot_left
            << "\" y2=\"" << y << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << plot_left - 9 << "\" y=\"" << y + 4
            << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << fmt(v)
            << "</text>\n";
    }

    const double slot = (plot_right - plot_left) / samples.size();
    const double box_w = std::min(60.0, slot * 0.5);
    for (size_t i = 0; i < samples.size(); ++i) {
        const BoxStats& b = stats[i];
        const double cx = plot_left + slot * (i + 0.5);
        svg << "<line x1=\"" << cx << "\" y1=\"" << ypix(b.lo_whisker) << "\" x2=\"" << cx
            << "\" y2=\"" << ypix(b.q1) << "\" stroke=\"black\"/>\n";
        svg << "<line x1=\"" << cx << "\" y1=\"" << ypix(b.q3) << "\" x2=\"" << cx << "\" y2=\""
            << ypix(b.hi_whisker) << "\" stroke=\"black\"/>\n";
        for (double w : {b.lo_whisker, b.hi_whisker})
            svg << "<line x1=\"" << cx - box_w / 4 << "\" y1=\"" << ypix(w) << "\" x2=\""
                << cx + box_w / 4 << "\" y2=\"" << ypix(w) << "\" stroke=\"black\"/>\n";
        svg << "<rect x=\"" << cx - box_w / 2 << "\" y=\"" << ypix(b.q3) << "\" width=\"" << box_w
            << "\" height=\"" << ypix(b.q1) - ypix(b.q3)
            << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
        svg << "<line x1=\"" << cx - box_w / 2 << "\" y1=\"" << ypix(b.med) << "\" x2=\""
            << cx + box_w / 2 << "\" y2=\"" << ypix(b.med)
            << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << cx << "\" y=\"" << plot_bottom + 20
            << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << labels[i]
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_boxplot_svg(const std::string& path, const std::string& title,
                       const std::vector<std::string>& labels,
                       const std::vector<std::vector<double>>& samples) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << boxplot_svg(title, labels, samples);
}

} // namespace stoptree
