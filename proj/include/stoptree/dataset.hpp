#pragma once
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stoptree {

/// Immutable regression sample: covariate matrix X (n rows, d columns,
/// row-major) and response vector y. Shareable read-only across workers.
struct Dataset {
    std::vector<double> x; // n*d, row-major
    std::vector<double> y; // n
    int n = 0;
    int d = 0;
    std::vector<std::string> feature_names; // empty or size d

    double xat(int row, int col) const { return x[static_cast<size_t>(row) * d + col]; }
    std::span<const double> row(int i) const {
        return {x.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)};
    }
};

struct CsvOptions {
    char delimiter = ',';
    bool header = true;
};

struct SplitSpec {
    double train_fraction = 0.9; // in (0, 1]
    std::uint64_t seed = 0;
};

// Errors carry enough context to name the offending cell.
struct CsvError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Load a CSV file, extracting `target_column` (a header name, or a 0-based
/// column index when numeric or when there is no header) into y and the
/// remaining columns into x in file order. Non-finite cells are rejected.
Dataset load_csv(const std::string& path, const std::string& target_column,
                 const CsvOptions& opts = {});

/// Write a dataset back to CSV with 17 significant digits, so that
/// load(save(ds)) reproduces ds exactly. Target lands in the last column.
void save_csv(const Dataset& ds, const std::string& path, const std::string& target_name = "target",
              const CsvOptions& opts = {});

/// Deterministic shuffled split. Train takes ceil(fraction*n) rows; both
/// parts keep the shuffled index order.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, const SplitSpec& spec);

/// Row subset in the given order.
Dataset subset(const Dataset& ds, std::span<const int> rows);

// ---- empirical L^2_n geometry -------------------------------------------

/// (1/n) sum v_i^2
double empirical_norm_sq(std::span<const double> v);

/// (1/n) sum a_i b_i
double empirical_dot(std::span<const double> a, std::span<const double> b);

} // namespace stoptree
