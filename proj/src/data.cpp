#include "rpcate/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace rpcate {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_cell(const std::string& raw, std::size_t line_no, const std::string& column) {
    std::string s = trim(raw);
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw CsvError("non-numeric value '" + s + "' at line " + std::to_string(line_no) +
                       ", column '" + column + "'");
    }
    return out;
}

void format_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

bool reserved_column(const std::string& name) {
    return name == "y" || name == "y_true" || name == "y_me";
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open " + path.string());

    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        header = split_line(t);
        break;
    }
    if (header.empty()) throw CsvError("empty file: " + path.string());
    for (auto& h : header) h = trim(h);

    int y_true_col = -1, y_me_col = -1, y_col = -1;
    std::vector<int> feature_cols;
    std::vector<std::string> feature_names;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "y_true") y_true_col = static_cast<int>(i);
        else if (header[i] == "y_me") y_me_col = static_cast<int>(i);
        else if (header[i] == "y") y_col = static_cast<int>(i);  // ignored, recomputed
        else {
            feature_cols.push_back(static_cast<int>(i));
            feature_names.push_back(header[i]);
        }
    }
    (void)y_col;
    if (y_true_col < 0) throw CsvError("missing required column 'y_true' in " + path.string());
    if (y_me_col < 0) throw CsvError("missing required column 'y_me' in " + path.string());
    if (feature_cols.empty()) throw CsvError("no feature columns in " + path.string());

    std::vector<double> flat;
    std::vector<double> y_true, y_me;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::vector<std::string> cells = split_line(t);
        if (cells.size() != header.size()) {
            throw CsvError("line " + std::to_string(line_no) + " has " +
                           std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(header.size()));
        }
        for (std::size_t j = 0; j < feature_cols.size(); ++j) {
            flat.push_back(parse_cell(cells[feature_cols[j]], line_no, feature_names[j]));
        }
        y_true.push_back(parse_cell(cells[y_true_col], line_no, "y_true"));
        y_me.push_back(parse_cell(cells[y_me_col], line_no, "y_me"));
    }
    if (y_true.empty()) throw CsvError("no data rows in " + path.string());

    Dataset d;
    d.feature_names = std::move(feature_names);
    d.features = Tensor({static_cast<int>(y_true.size()), static_cast<int>(feature_cols.size())},
                        std::move(flat));
    d.y = std::vector<double>(y_true.size());
    for (std::size_t i = 0; i < y_true.size(); ++i) d.y[i] = y_true[i] - y_me[i];
    d.y_true = std::move(y_true);
    d.y_me = std::move(y_me);
    return d;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& sort_feature_name,
                 int& x_prime_out) {
    Dataset d = load_csv(path);
    x_prime_out = find_feature(d, sort_feature_name);
    return d;
}

void save_csv(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw CsvError("cannot write " + path.string());
    std::string buf;
    for (const auto& name : d.feature_names) {
        buf += name;
        buf += ',';
    }
    buf += "y_true,y_me\n";
    for (int i = 0; i < d.m(); ++i) {
        for (int j = 0; j < d.n(); ++j) {
            format_double(buf, d.features.at(i, j));
            buf += ',';
        }
        format_double(buf, d.y_true[static_cast<std::size_t>(i)]);
        buf += ',';
        format_double(buf, d.y_me[static_cast<std::size_t>(i)]);
        buf += '\n';
    }
    out << buf;
    if (!out) throw CsvError("write failed: " + path.string());
}

int find_feature(const Dataset& d, const std::string& name) {
    if (reserved_column(name)) {
        throw CsvError("'" + name + "' is a target column, not a feature");
    }
    for (std::size_t i = 0; i < d.feature_names.size(); ++i) {
        if (d.feature_names[i] == name) return static_cast<int>(i);
    }
    throw CsvError("missing column '" + name + "'");
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, int train_count) {
    if (train_count < 1 || train_count >= d.m()) {
        throw CsvError("train split must leave at least one row on each side, got " +
                       std::to_string(train_count) + " of " + std::to_string(d.m()));
    }
    auto take = [&](int begin, int count) {
        Dataset part;
        part.feature_names = d.feature_names;
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(count) * d.n());
        for (int i = begin; i < begin + count; ++i) {
            for (int j = 0; j < d.n(); ++j) flat.push_back(d.features.at(i, j));
            part.y_true.push_back(d.y_true[static_cast<std::size_t>(i)]);
            part.y_me.push_back(d.y_me[static_cast<std::size_t>(i)]);
            part.y.push_back(d.y[static_cast<std::size_t>(i)]);
        }
        part.features = Tensor({count, d.n()}, std::move(flat));
        return part;
    };
    return {take(0, train_count), take(train_count, d.m() - train_count)};
}

PsdView to_psd(const Dataset& d, int x_prime) {
    if (x_prime < 0 || x_prime >= d.n()) {
        throw ShapeError("sort feature index " + std::to_string(x_prime) +
                         " out of range for " + std::to_string(d.n()) + " features");
    }
    PsdView view;
    view.sort_feature = x_prime;
    view.perm.resize(static_cast<std::size_t>(d.m()));
    std::iota(view.perm.begin(), view.perm.end(), 0);
    std::stable_sort(view.perm.begin(), view.perm.end(), [&](int a, int b) {
        return d.features.at(a, x_prime) < d.features.at(b, x_prime);
    });

    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(d.m()) * d.n());
    view.sorted_targets.resize(static_cast<std::size_t>(d.m()));
    for (int j = 0; j < d.m(); ++j) {
        int src = view.perm[static_cast<std::size_t>(j)];
        for (int c = 0; c < d.n(); ++c) flat.push_back(d.features.at(src, c));
        view.sorted_targets[static_cast<std::size_t>(j)] = d.y[static_cast<std::size_t>(src)];
    }
    view.sorted_features = Tensor({d.m(), d.n()}, std::move(flat));
    return view;
}

std::vector<double> unsort(const std::vector<double>& sorted_order, const PsdView& view) {
    if (sorted_order.size() != view.perm.size()) {
        throw ShapeError("unsort: got " + std::to_string(sorted_order.size()) +
                         " values for " + std::to_string(view.perm.size()) + " rows");
    }
    std::vector<double> out(sorted_order.size());
    for (std::size_t j = 0; j < sorted_order.size(); ++j) {
        out[static_cast<std::size_t>(view.perm[j])] = sorted_order[j];
    }
    return out;
}

Tensor unsort_predictions(const Tensor& predictions, const PsdView& view) {
    if (predictions.ndim() != 2 || predictions.dim(1) != 1 ||
        predictions.dim(0) != static_cast<int>(view.perm.size())) {
        throw ShapeError("unsort_predictions: expected " +
                         std::to_string(view.perm.size()) + " x 1, got " +
                         shape_string(predictions.shape()));
    }
    std::vector<double> vals(predictions.data().begin(), predictions.data().end());
    return Tensor::column(unsort(vals, view));
}

Tensor unsort_rows(const Tensor& sorted_rows, const PsdView& view) {
    if (sorted_rows.ndim() != 2 || sorted_rows.dim(0) != static_cast<int>(view.perm.size())) {
        throw ShapeError("unsort_rows: row count mismatch");
    }
    Tensor out(sorted_rows.shape());
    int cols = sorted_rows.dim(1);
    for (std::size_t j = 0; j < view.perm.size(); ++j) {
        for (int c = 0; c < cols; ++c) {
            out.at(view.perm[j], c) = sorted_rows.at(static_cast<int>(j), c);
        }
    }
    return out;
}

std::vector<int> cyclic_windows(int m, int w) {
    if (w < 1) throw ShapeError("window size must be at least 1, got " + std::to_string(w));
    if (w > m) {
        throw ShapeError("window size " + std::to_string(w) + " exceeds row count " +
                         std::to_string(m));
    }
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(m) * w);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < w; ++j) idx.push_back((i + j) % m);
    }
    return idx;
}

int pid_side(int w, int m) {
    if (w < 1 || w > m) {
        throw ShapeError("window size " + std::to_string(w) + " invalid for " +
                         std::to_string(m) + " rows");
    }
    int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(w))));
    if (k * k != w) {
        throw ShapeError("window size " + std::to_string(w) + " is not a perfect square");
    }
    return k;
}

PidTensor to_pid(const Tensor& rows, int w) {
    if (rows.ndim() != 2) throw ShapeError("to_pid: needs m x n input");
    int m = rows.dim(0), n = rows.dim(1);
    int k = pid_side(w, m);
    std::vector<int> idx = cyclic_windows(m, w);
    PidTensor pid;
    pid.window = w;
    pid.k = k;
    pid.source_rows = m;
    pid.data = Tensor({m, k, k, n});
    for (int i = 0; i < m; ++i) {
        for (int r = 0; r < w; ++r) {
            int src = idx[static_cast<std::size_t>(i) * w + r];
            for (int c = 0; c < n; ++c) {
                pid.data.at(i, r / k, r % k, c) = rows.at(src, c);
            }
        }
    }
    return pid;
}

Tape::Var to_pid(Tape& tape, Tape::Var rows, int w) {
    const Tensor& t = tape.value(rows);
    if (t.ndim() != 2) throw ShapeError("to_pid: needs m x n input");
    int m = t.dim(0), n = t.dim(1);
    int k = pid_side(w, m);
    Tape::Var gathered = tape.gather_rows(rows, cyclic_windows(m, w));
    return tape.reshape(gathered, {m, k, k, n});
}

MinMaxScaler MinMaxScaler::fit(const Tensor& features) {
    int m = features.dim(0), n = features.dim(1);
    MinMaxScaler s;
    s.lo.assign(static_cast<std::size_t>(n), 0.0);
    s.hi.assign(static_cast<std::size_t>(n), 0.0);
    for (int j = 0; j < n; ++j) {
        double lo = features.at(0, j), hi = features.at(0, j);
        for (int i = 1; i < m; ++i) {
            lo = std::min(lo, features.at(i, j));
            hi = std::max(hi, features.at(i, j));
        }
        s.lo[static_cast<std::size_t>(j)] = lo;
        s.hi[static_cast<std::size_t>(j)] = hi;
    }
    return s;
}

Tensor MinMaxScaler::apply(const Tensor& features) const {
    int m = features.dim(0), n = features.dim(1);
    if (static_cast<std::size_t>(n) != lo.size()) {
        throw ShapeError("scaler fitted on " + std::to_string(lo.size()) +
                         " features, applied to " + std::to_string(n));
    }
    Tensor out({m, n});
    for (int j = 0; j < n; ++j) {
        double span = hi[static_cast<std::size_t>(j)] - lo[static_cast<std::size_t>(j)];
        for (int i = 0; i < m; ++i) {
            out.at(i, j) = span > 0.0 ? (features.at(i, j) - lo[static_cast<std::size_t>(j)]) / span
                                      : 0.0;
        }
    }
    return out;
}

}  // namespace rpcate
