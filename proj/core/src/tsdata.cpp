#include "tscert/tsdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "tscert/errors.hpp"
#include "tscert/random.hpp"

namespace tscert::tsdata {
namespace {

struct RawRow {
  double label;
  std::vector<double> values;
};

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

double parse_number(const std::string& field, std::size_t line_number) {
  const std::string token = trim(field);
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  // from_chars rejects a leading '+'.
  if (begin != end && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (token.empty() || ec != std::errc() || ptr != end) {
    throw DataError("line " + std::to_string(line_number) + ": cannot parse '" + token +
                    "' as a number");
  }
  if (!std::isfinite(value)) {
    throw DataError("line " + std::to_string(line_number) + ": non-finite value");
  }
  return value;
}

std::vector<RawRow> read_rows(const std::filesystem::path& path, Delimiter delimiter) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  const char sep = delimiter == Delimiter::tab ? '\t' : ',';

  std::vector<RawRow> rows;
  std::string line;
  std::size_t line_number = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    if (delimiter == Delimiter::tab) {
      // Tolerate runs of whitespace between fields.
      std::istringstream ls(line);
      std::string field;
      while (ls >> field) fields.push_back(field);
    } else {
      std::istringstream ls(line);
      std::string field;
      while (std::getline(ls, field, sep)) fields.push_back(field);
    }
    if (fields.size() < 2) {
      throw DataError("line " + std::to_string(line_number) + ": expected a label and values");
    }
    if (width == 0) {
      width = fields.size();
    } else if (fields.size() != width) {
      throw DataError("line " + std::to_string(line_number) + ": ragged row with " +
                      std::to_string(fields.size() - 1) + " values, expected " +
                      std::to_string(width - 1));
    }
    RawRow row;
    row.label = parse_number(fields[0], line_number);
    if (row.label != std::floor(row.label)) {
      throw DataError("line " + std::to_string(line_number) + ": label is not an integer");
    }
    row.values.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      row.values.push_back(parse_number(fields[i], line_number));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + ": empty input");
  return rows;
}

Dataset assemble(std::vector<RawRow> rows, const std::map<double, std::size_t>& mapping,
                 std::string name, Split split) {
  Dataset d;
  d.name = std::move(name);
  d.split = split;
  d.num_labels = mapping.size();
  d.length = rows.front().values.size();
  d.series.reserve(rows.size());
  for (auto& row : rows) {
    d.series.push_back({std::move(row.values), mapping.at(row.label)});
  }
  return d;
}

std::map<double, std::size_t> label_mapping(const std::set<double>& labels) {
  std::map<double, std::size_t> mapping;
  for (double label : labels) mapping.emplace(label, mapping.size());
  return mapping;
}

}  // namespace

void validate(const Dataset& dataset) {
  if (dataset.length == 0) throw DataError(dataset.name + ": zero series length");
  if (dataset.num_labels == 0) throw DataError(dataset.name + ": no labels");
  for (std::size_t i = 0; i < dataset.series.size(); ++i) {
    const auto& s = dataset.series[i];
    if (s.values.size() != dataset.length) {
      throw DataError(dataset.name + ": series " + std::to_string(i) + " has length " +
                      std::to_string(s.values.size()) + ", expected " +
                      std::to_string(dataset.length));
    }
    if (s.label >= dataset.num_labels) {
      throw DataError(dataset.name + ": series " + std::to_string(i) + " label out of range");
    }
    if (!std::all_of(s.values.begin(), s.values.end(), [](double v) { return std::isfinite(v); })) {
      throw DataError(dataset.name + ": series " + std::to_string(i) + " has non-finite values");
    }
  }
}

Dataset load_ucr_file(const std::filesystem::path& path, Delimiter delimiter, Split split) {
  auto rows = read_rows(path, delimiter);
  std::set<double> labels;
  for (const auto& r : rows) labels.insert(r.label);
  return assemble(std::move(rows), label_mapping(labels), path.stem().string(), split);
}

DatasetPair load_ucr_pair(const std::filesystem::path& train_path,
                          const std::filesystem::path& test_path, Delimiter delimiter) {
  auto train_rows = read_rows(train_path, delimiter);
  auto test_rows = read_rows(test_path, delimiter);
  if (train_rows.front().values.size() != test_rows.front().values.size()) {
    throw DataError("train and test series lengths differ");
  }
  std::set<double> labels;
  for (const auto& r : train_rows) labels.insert(r.label);
  for (const auto& r : test_rows) labels.insert(r.label);
  const auto mapping = label_mapping(labels);
  return {assemble(std::move(train_rows), mapping, train_path.stem().string(), Split::train),
          assemble(std::move(test_rows), mapping, test_path.stem().string(), Split::test)};
}

Dataset generate_cbf(std::size_t n_per_label, std::size_t length, std::uint64_t seed,
                     Split split) {
  if (length < 64) throw ConfigError("cbf: length must be at least 64");
  Engine rng = make_engine(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const double len = static_cast<double>(length);
  std::uniform_real_distribution<double> start(len / 8.0, len / 4.0);
  std::uniform_real_distribution<double> width(len / 4.0, 3.0 * len / 4.0);

  Dataset d;
  d.name = "cbf";
  d.split = split;
  d.num_labels = 3;
  d.length = length;
  d.series.reserve(3 * n_per_label);
  for (std::size_t i = 0; i < n_per_label; ++i) {
    for (std::size_t label = 0; label < 3; ++label) {
      const double a = start(rng);
      const double b = a + width(rng);
      const double amplitude = 6.0 + unit(rng);
      std::vector<double> values(length);
      for (std::size_t t = 0; t < length; ++t) {
        const double tt = static_cast<double>(t);
        double shape = 0.0;
        if (tt >= a && tt <= b) {
          switch (label) {
            case 0: shape = 1.0; break;
            case 1: shape = (tt - a) / (b - a); break;
            default: shape = (b - tt) / (b - a); break;
          }
        }
        values[t] = amplitude * shape + unit(rng);
      }
      d.series.push_back({std::move(values), label});
    }
  }
  return d;
}

std::vector<std::vector<double>> overlap_prototypes(std::size_t length, std::size_t num_labels,
                                                    double separation) {
  if (num_labels < 2) throw ConfigError("overlap: need at least 2 labels");
  if (separation < 0.0) throw ConfigError("overlap: separation must be non-negative");
  // Highest class frequency must stay below Nyquist.
  if (length < 4 * num_labels + 8) throw ConfigError("overlap: length too short for num_labels");
  const double len = static_cast<double>(length);
  auto bump = [&](double centre, double width) {
    std::vector<double> v(length);
    for (std::size_t t = 0; t < length; ++t) {
      const double u = (static_cast<double>(t) - centre) / width;
      v[t] = std::exp(-0.5 * u * u);
    }
    return v;
  };

  // Class directions: Gaussian-windowed oscillations at distinct
  // frequencies, Gram-Schmidt orthonormalized. Distinct local frequency
  // content keeps the classes separable for translation-invariant models.
  const auto envelope = bump(len / 2.0, len / 4.0);
  std::vector<std::vector<double>> directions;
  for (std::size_t c = 0; c < num_labels; ++c) {
    const double cycles = 3.0 + 2.0 * static_cast<double>(c);
    std::vector<double> v(length);
    for (std::size_t t = 0; t < length; ++t) {
      v[t] = envelope[t] * std::sin(2.0 * std::numbers::pi * cycles * static_cast<double>(t) / len);
    }
    for (const auto& u : directions) {
      const double dot = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
      for (std::size_t t = 0; t < length; ++t) v[t] -= dot * u[t];
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (double& x : v) x /= norm;
    directions.push_back(std::move(v));
  }

  const auto base = bump(len / 2.0, len / 4.0);
  const double scale = separation / std::numbers::sqrt2;
  std::vector<std::vector<double>> prototypes;
  for (const auto& dir : directions) {
    std::vector<double> p(length);
    for (std::size_t t = 0; t < length; ++t) p[t] = 2.0 * base[t] + scale * dir[t];
    prototypes.push_back(std::move(p));
  }
  return prototypes;
}

Dataset generate_overlap(std::size_t n_per_label, std::size_t length, std::size_t num_labels,
                         double separation, std::uint64_t seed, Split split) {
  const auto prototypes = overlap_prototypes(length, num_labels, separation);
  Engine rng = make_engine(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  Dataset d;
  d.name = "overlap";
  d.split = split;
  d.num_labels = num_labels;
  d.length = length;
  d.series.reserve(n_per_label * num_labels);
  for (std::size_t i = 0; i < n_per_label; ++i) {
    for (std::size_t label = 0; label < num_labels; ++label) {
      std::vector<double> values = prototypes[label];
      for (double& v : values) v += unit(rng);
      d.series.push_back({std::move(values), label});
    }
  }
  return d;
}

std::vector<double> znormalize(std::vector<double> values) {
  if (values.empty()) return values;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  // Tolerance absorbs rounding in the mean of a constant series.
  if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
    std::fill(values.begin(), values.end(), 0.0);
    return values;
  }
  for (double& v : values) v = (v - mean) / sd;
  return values;
}

Dataset znormalize(Dataset dataset) {
  for (auto& s : dataset.series) s.values = znormalize(std::move(s.values));
  return dataset;
}

Delimiter parse_delimiter(const std::string& text) {
  if (text == "tab") return Delimiter::tab;
  if (text == "comma") return Delimiter::comma;
  throw ConfigError("delimiter must be 'tab' or 'comma', got '" + text + "'");
}

}  // namespace tscert::tsdata
