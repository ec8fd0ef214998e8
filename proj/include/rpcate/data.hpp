#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rpcate/tensor.hpp"

namespace rpcate {

/// Malformed or inconsistent CSV input.
struct CsvError : std::runtime_error {
    explicit CsvError(const std::string& what) : std::runtime_error(what) {}
};

/// Tabular hybrid-modeling data. The residual target y is always recomputed
/// as y_true - y_me on load; a y column in the file is never trusted.
struct Dataset {
    std::vector<std::string> feature_names;
    Tensor features;              // m x n
    std::vector<double> y_true;
    std::vector<double> y_me;
    std::vector<double> y;        // y_true - y_me

    int m() const { return features.ndim() == 2 ? features.dim(0) : 0; }
    int n() const { return features.ndim() == 2 ? features.dim(1) : 0; }
};

Dataset load_csv(const std::filesystem::path& path);
/// Also resolves the sort feature by name (error if the column is missing).
Dataset load_csv(const std::filesystem::path& path, const std::string& sort_feature_name,
                 int& x_prime_out);
void save_csv(const Dataset& d, const std::filesystem::path& path);

int find_feature(const Dataset& d, const std::string& name);

/// Head/tail split: first `train_count` rows train, the rest evaluate.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, int train_count);

/// Rows sorted ascending by one feature column; ties keep original order.
/// perm[j] is the original row shown at sorted position j.
struct PsdView {
    Tensor sorted_features;        // m x n
    std::vector<double> sorted_targets;
    std::vector<int> perm;
    int sort_feature = 0;
};

PsdView to_psd(const Dataset& d, int x_prime);

/// Undo the PSD permutation: element j of `sorted_order` returns to original
/// row perm[j].
std::vector<double> unsort(const std::vector<double>& sorted_order, const PsdView& view);
Tensor unsort_predictions(const Tensor& predictions, const PsdView& view);  // m x 1
Tensor unsort_rows(const Tensor& sorted_rows, const PsdView& view);         // m x n

/// Flat cyclic sliding-window index map: m windows of w rows each, window i
/// covering source rows (i, i+1, ..., i+w-1) mod m, laid out window-major.
std::vector<int> cyclic_windows(int m, int w);

struct PidTensor {
    Tensor data;       // m x k x k x n
    int window = 0;    // w = k*k
    int k = 0;
    int source_rows = 0;
};

/// Window size must be a perfect square no larger than the row count.
int pid_side(int w, int m);
PidTensor to_pid(const Tensor& rows, int w);
Tape::Var to_pid(Tape& tape, Tape::Var rows, int w);

/// Optional feature scaler (fit on the train split only).
struct MinMaxScaler {
    std::vector<double> lo, hi;
    static MinMaxScaler fit(const Tensor& features);
    Tensor apply(const Tensor& features) const;
};

}  // namespace rpcate
