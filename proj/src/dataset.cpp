#include "stoptree/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "stoptree/rng.hpp"

namespace stoptree {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == delim) {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool parse_cell(const std::string& raw, double* out) {
    const std::string s = trim(raw);
    if (s.empty()) return false;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto res = std::from_chars(begin, end, *out);
    if (res.ec != std::errc() || res.ptr != end) return false;
    return std::isfinite(*out);
}

bool is_integer(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

} // namespace

Dataset load_csv(const std::string& path, const std::string& target_column, const CsvOptions& opts) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path);

    std::string line;
    std::vector<std::string> header;
    int line_no = 0;

    if (opts.header) {
        if (!std::getline(in, line)) throw CsvError("empty file: " + path);
        ++line_no;
        header = split_line(line, opts.delimiter);
        for (auto& h : header) h = trim(h);
    }

    // resolve target: exact header name wins, otherwise a numeric index
    int target_idx = -1;
    if (opts.header) {
        for (size_t j = 0; j < header.size(); ++j)
            if (header[j] == target_column) target_idx = static_cast<int>(j);
    }
    if (target_idx < 0 && is_integer(target_column)) target_idx = std::stoi(target_column);

    std::vector<std::vector<double>> rows;
    int ncols = opts.header ? static_cast<int>(header.size()) : -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_line(line, opts.delimiter);
        if (ncols < 0) ncols = static_cast<int>(cells.size());
        if (static_cast<int>(cells.size()) != ncols)
            throw CsvError("row " + std::to_string(line_no) + ": expected " + std::to_string(ncols) +
                           " columns, got " + std::to_string(cells.size()));
        std::vector<double> vals(cells.size());
        for (size_t j = 0; j < cells.size(); ++j) {
            if (!parse_cell(cells[j], &vals[j]))
                throw CsvError("row " + std::to_string(line_no) + ", column " + std::to_string(j + 1) +
                               ": cannot parse '" + trim(cells[j]) + "' as a finite number");
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw CsvError("no data rows in " + path);
    if (target_idx < 0)
        throw CsvError("target column '" + target_column + "' not found in " + path);
    if (target_idx >= ncols)
        throw CsvError("target column index " + std::to_string(target_idx) + " out of range (" +
                       std::to_string(ncols) + " columns)");
    if (ncols < 2) throw CsvError("need at least one feature column besides the target");

    Dataset ds;
    ds.n = static_cast<int>(rows.size());
    ds.d = ncols - 1;
    ds.x.reserve(static_cast<size_t>(ds.n) * ds.d);
    ds.y.reserve(ds.n);
    for (const auto& r : rows) {
        for (int j = 0; j < ncols; ++j) {
            if (j == target_idx)
                ds.y.push_back(r[j]);
            else
                ds.x.push_back(r[j]);
        }
    }
    if (opts.header) {
        for (int j = 0; j < ncols; ++j)
            if (j != target_idx) ds.feature_names.push_back(header[j]);
    }
    return ds;
}

void save_csv(const Dataset& ds, const std::string& path, const std::string& target_name,
              const CsvOptions& opts) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write file: " + path);
    char buf[64];
    if (opts.header) {
        for (int j = 0; j < ds.d; ++j) {
            const std::string name =
                ds.feature_names.empty() ? ("x" + std::to_string(j + 1)) : ds.feature_names[j];
            out << name << opts.delimiter;
        }
        out << target_name << '\n';
    }
    for (int i = 0; i < ds.n; ++i) {
        for (int j = 0; j < ds.d; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.xat(i, j));
            out << buf << opts.delimiter;
        }
        std::snprintf(buf, sizeof(buf), "%.17g", ds.y[i]);
        out << buf << '\n';
    }
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, const SplitSpec& spec) {
    if (ds.n < 2) throw std::invalid_argument("split_train_test: need n >= 2");
    if (!(spec.train_fraction > 0.0) || spec.train_fraction > 1.0)
        throw std::invalid_argument("split_train_test: train_fraction must be in (0,1]");

    std::vector<int> order(ds.n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(spec.seed);
    for (int i = ds.n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }

    const int n_train = static_cast<int>(std::ceil(spec.train_fraction * ds.n));
    if (n_train < 1) throw std::invalid_argument("split_train_test: empty train set");

    const std::span<const int> all(order);
    return {subset(ds, all.subspan(0, n_train)), subset(ds, all.subspan(n_train))};
}

Dataset subset(const Dataset& ds, std::span<const int> rows) {
    Dataset out;
    out.n = static_cast<int>(rows.size());
    out.d = ds.d;
    out.feature_names = ds.feature_names;
    out.x.reserve(static_cast<size_t>(out.n) * out.d);
    out.y.reserve(out.n);
    for (int i : rows) {
        const auto r = ds.row(i);
        out.x.insert(out.x.end(), r.begin(), r.end());
        out.y.push_back(ds.y[i]);
    }
    return out;
}

double empirical_norm_sq(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("empirical_norm_sq: empty vector");
    long double acc = 0.0L;
    for (double e : v) acc += static_cast<long double>(e) * e;
    return static_cast<double>(acc / static_cast<long double>(v.size()));
}

double empirical_dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("empirical_dot: size mismatch");
    long double acc = 0.0L;
    for (size_t i = 0; i < a.size(); ++i) acc += static_cast<long double>(a[i]) * b[i];
    return static_cast<double>(acc / static_cast<long double>(a.size()));
}

} // namespace stoptree
