#pragma once
#include <string>
#include <vector>

namespace stoptree {

/// Self-contained SVG boxplot: median, quartile box, whiskers at 1.5 IQR.
/// One box per labelled sample; no external assets.
std::string boxplot_svg(const std::string& title, const std::vector<std::string>& labels,
                        const std::vector<std::vector<double>>& samples);

void write_boxplot_svg(const std::string& path, const std::string& title,
                       const std::vector<std::string>& labels,
                       const std::vector<std::vector<double>>& samples);

} // namespace stoptree
