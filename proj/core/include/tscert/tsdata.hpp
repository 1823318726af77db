#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tscert::tsdata {

enum class Split { train, test };
enum class Delimiter { tab, comma };

struct TimeSeries {
  std::vector<double> values;
  std::size_t label = 0;
};

struct Dataset {
  std::string name;
  std::vector<TimeSeries> series;
  std::size_t num_labels = 0;
  std::size_t length = 0;
  Split split = Split::train;

  std::size_t size() const noexcept { return series.size(); }
  bool empty() const noexcept { return series.empty(); }
};

// Throws DataError when a series has the wrong length, an out-of-range
// label or a non-finite value.
void validate(const Dataset& dataset);

/// Reads a UCR text file: one series per line, integer label first.
///
/// Original labels are remapped to 0..k-1 in ascending order of their
/// original value. Use load_ucr_pair when a train/test pair must share
/// one mapping.
Dataset load_ucr_file(const std::filesystem::path& path, Delimiter delimiter,
                      Split split = Split::train);

struct DatasetPair {
  Dataset train;
  Dataset test;
};

// Loads a train/test pair with a label mapping built from the union of
// both files.
DatasetPair load_ucr_pair(const std::filesystem::path& train_path,
                          const std::filesystem::path& test_path, Delimiter delimiter);

// Cylinder-bell-funnel series, labels 0/1/2 respectively. Requires length >= 64.
Dataset generate_cbf(std::size_t n_per_label, std::size_t length, std::uint64_t seed,
                     Split split = Split::train);

/// k prototypes with pairwise l2 distance `separation`, plus unit noise.
///
/// Each prototype is a shared Gaussian bump plus separation/sqrt(2) times
/// one member of an orthonormalized family of Gaussian-windowed
/// oscillations (3, 5, 7, ... cycles per series). Requires
/// length >= 4k + 8. The
/// prototypes depend only on (length, k, separation); the seed drives the
/// noise alone, so train and test sets drawn with different seeds share
/// their classes.
Dataset generate_overlap(std::size_t n_per_label, std::size_t length, std::size_t num_labels,
                         double separation, std::uint64_t seed, Split split = Split::train);

// The noiseless class prototypes used by generate_overlap.
std::vector<std::vector<double>> overlap_prototypes(std::size_t length, std::size_t num_labels,
                                                    double separation);

// Per-series z-normalization; constant series become all zeros.
Dataset znormalize(Dataset dataset);
std::vector<double> znormalize(std::vector<double> values);

Delimiter parse_delimiter(const std::string& text);

}  // namespace tscert::tsdata
