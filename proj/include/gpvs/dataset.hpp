#pragma once

#include "gpvs/errors.hpp"
#include "gpvs/log.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace gpvs {

struct ColumnScaling {
  double min = 0.0;
  double max = 1.0;

  double forward(double v) const { return (v - min) / (max - min); }
  double inverse(double v) const { return min + v * (max - min); }
};

/// Design matrix and response. When `scaling` is non-empty, `x` holds the
/// min-max standardized columns and `scaling[j]` recovers the raw values.
struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> column_names;
  std::string response_name = "y";
  std::vector<ColumnScaling> scaling;

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index cols() const { return x.cols(); }
  bool standardized() const { return !scaling.empty(); }

  /// Maps raw sites onto the training scale. Never refits the scaling.
  /// Returns the number of entries falling outside the training range.
  std::size_t standardize_sites(Eigen::MatrixXd& sites) const {
    if (sites.cols() != cols())
      throw InvalidArgument("site matrix has " + std::to_string(sites.cols()) +
                            " columns, training data has " + std::to_string(cols()));
    if (!standardized())
      return 0;
    std::size_t outside = 0;
    for (Eigen::Index j = 0; j < sites.cols(); ++j) {
      const auto& s = scaling[static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < sites.rows(); ++i) {
        const double v = sites(i, j);
        if (v < s.min || v > s.max)
          ++outside;
        sites(i, j) = s.forward(v);
      }
    }
    return outside;
  }

  Dataset subset(const std::vector<Eigen::Index>& rows_to_keep) const {
    Dataset out;
    out.x.resize(static_cast<Eigen::Index>(rows_to_keep.size()), cols());
    out.y.resize(static_cast<Eigen::Index>(rows_to_keep.size()));
    for (std::size_t k = 0; k < rows_to_keep.size(); ++k) {
      out.x.row(static_cast<Eigen::Index>(k)) = x.row(rows_to_keep[k]);
      out.y(static_cast<Eigen::Index>(k)) = y(rows_to_keep[k]);
    }
    out.column_names = column_names;
    out.response_name = response_name;
    out.scaling = scaling;
    return out;
  }

  void validate() const {
    if (x.rows() != y.size())
      throw InvalidArgument("design has " + std::to_string(x.rows()) + " rows but response has " +
                            std::to_string(y.size()));
    if (x.rows() < 1)
      throw InvalidArgument("dataset is empty");
    if (!column_names.empty() && static_cast<Eigen::Index>(column_names.size()) != x.cols())
      throw InvalidArgument("column name count does not match design width");
    if (!x.allFinite() || !y.allFinite())
      throw InvalidArgument("dataset contains non-finite values");
  }
};

inline std::vector<std::string> default_column_names(Eigen::Index p) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p; ++j)
    names.push_back("x" + std::to_string(j + 1));
  return names;
}

inline Dataset make_dataset(Eigen::MatrixXd x, Eigen::VectorXd y,
                            std::vector<std::string> names = {}) {
  Dataset d;
  if (names.empty())
    names = default_column_names(x.cols());
  d.x = std::move(x);
  d.y = std::move(y);
  d.column_names = std::move(names);
  d.validate();
  return d;
}

namespace csv {

/// One parsed record with the physical line it started on.
struct Record {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

/// RFC-4180 style reader: comma separated, optional double-quoted fields with
/// "" escapes, CRLF or LF line endings.
inline std::vector<Record> read_records(std::istream& in, const std::string& source) {
  std::vector<Record> out;
  std::string field;
  Record rec;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  rec.line = 1;
  char c;
  auto end_field = [&] {
    rec.fields.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = rec.fields.size() == 1 && rec.fields[0].empty();
    if (!blank)
      out.push_back(std::move(rec));
    rec = Record{};
    rec.line = line;
  };
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n')
          ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
    case '"':
      if (field_started && !field.empty())
        throw ParseError(source, line, "unexpected quote inside unquoted field");
      in_quotes = true;
      field_started = true;
      break;
    case ',':
      end_field();
      break;
    case '\r':
      break;
    case '\n':
      ++line;
      end_record();
      break;
    default:
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes)
    throw ParseError(source, line, "unterminated quoted field");
  if (field_started || !field.empty() || !rec.fields.empty())
    end_record();
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t'))
    s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+')
    s.remove_prefix(1);
  if (s.empty())
    return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos)
    return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"')
      q += "\"\"";
    else
      q += c;
  }
  q += '"';
  return q;
}

/// Header plus a numeric matrix.
struct Table {
  std::vector<std::string> header;
  Eigen::MatrixXd values;

  Eigen::Index column(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name)
        return static_cast<Eigen::Index>(j);
    return -1;
  }
};

inline Table read_table(std::istream& in, const std::string& source) {
  auto records = read_records(in, source);
  if (records.empty())
    throw ParseError(source, 1, "missing header row");
  Table t;
  for (auto& h : records.front().fields)
    t.header.emplace_back(trim(h));
  const auto width = t.header.size();
  for (std::size_t j = 0; j < width; ++j)
    for (std::size_t k = j + 1; k < width; ++k)
      if (t.header[j] == t.header[k])
        throw ParseError(source, 1, "duplicate column '" + t.header[j] + "'");
  t.values.resize(static_cast<Eigen::Index>(records.size() - 1), static_cast<Eigen::Index>(width));
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != width)
      throw ParseError(source, rec.line,
                       "expected " + std::to_string(width) + " fields, found " +
                           std::to_string(rec.fields.size()));
    for (std::size_t j = 0; j < width; ++j) {
      auto v = parse_double(rec.fields[j]);
      if (!v)
        throw ParseError(source, rec.line,
                         "non-numeric value '" + rec.fields[j] + "' in column '" + t.header[j] + "'");
      t.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(j)) = *v;
    }
  }
  return t;
}

inline Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw InvalidArgument("cannot open '" + path + "'");
  return read_table(in, path);
}

inline void write_table(std::ostream& out, const std::vector<std::string>& header,
                        const Eigen::MatrixXd& values) {
  for (std::size_t j = 0; j < header.size(); ++j)
    out << (j ? "," : "") << quote_if_needed(header[j]);
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      out << (j ? "," : "") << format_double(values(i, j));
    out << '\n';
  }
}

} // namespace csv

inline Dataset dataset_from_table(const csv::Table& t, const std::string& source,
                                  const std::string& response, bool standardize) {
  const auto ycol = t.column(response);
  if (ycol < 0)
    throw ParseError(source, 1, "response column '" + response + "' not found");
  if (t.values.rows() < 1)
    throw ParseError(source, 2, "no data rows");
  Dataset d;
  d.response_name = response;
  const Eigen::Index p = t.values.cols() - 1;
  d.x.resize(t.values.rows(), p);
  d.y = t.values.col(ycol);
  Eigen::Index out_col = 0;
  for (Eigen::Index j = 0; j < t.values.cols(); ++j) {
    if (j == ycol)
      continue;
    d.x.col(out_col++) = t.values.col(j);
    d.column_names.push_back(t.header[static_cast<std::size_t>(j)]);
  }
  if (standardize) {
    for (Eigen::Index j = 0; j < p; ++j) {
      ColumnScaling s{d.x.col(j).minCoeff(), d.x.col(j).maxCoeff()};
      if (!(s.max > s.min))
        throw ParseError(source, 1,
                         "column '" + d.column_names[static_cast<std::size_t>(j)] +
                             "' is constant and cannot be standardized");
      for (Eigen::Index i = 0; i < d.x.rows(); ++i)
        d.x(i, j) = s.forward(d.x(i, j));
      d.scaling.push_back(s);
    }
  }
  return d;
}

/// Reads a CSV with a header row; every column except `response` becomes a
/// covariate, in file order.
inline Dataset ingest(std::istream& in, const std::string& source, const std::string& response,
                      bool standardize) {
  return dataset_from_table(csv::read_table(in, source), source, response, standardize);
}

inline Dataset ingest(const std::string& path, const std::string& response, bool standardize) {
  return dataset_from_table(csv::read_table(path), path, response, standardize);
}

/// Writes the dataset as stored (standardized values when standardized).
inline void export_csv(const Dataset& d, std::ostream& out) {
  auto header = d.column_names.empty() ? default_column_names(d.cols()) : d.column_names;
  header.push_back(d.response_name);
  Eigen::MatrixXd values(d.rows(), d.cols() + 1);
  values << d.x, d.y;
  csv::write_table(out, header, values);
}

inline void export_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw InvalidArgument("cannot write '" + path + "'");
  export_csv(d, out);
}

/// Extracts the training covariates (by name) from a table of new sites.
/// Extra columns, such as a response, are ignored.
inline Eigen::MatrixXd sites_from_table(const csv::Table& t, const std::string& source,
                                        const std::vector<std::string>& columns) {
  Eigen::MatrixXd sites(t.values.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const auto c = t.column(columns[j]);
    if (c < 0)
      throw ParseError(source, 1, "site file lacks covariate column '" + columns[j] + "'");
    sites.col(static_cast<Eigen::Index>(j)) = t.values.col(c);
  }
  return sites;
}

/// Seeded random split into a training part of `n_train` rows and the rest.
inline std::pair<Dataset, Dataset> random_split(const Dataset& d, Eigen::Index n_train,
                                                std::uint64_t seed) {
  if (n_train < 1 || n_train >= d.rows())
    throw InvalidArgument("training size must lie in [1, n-1]");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(d.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Eigen::Index> train(idx.begin(), idx.begin() + n_train);
  std::vector<Eigen::Index> rest(idx.begin() + n_train, idx.end());
  std::sort(train.begin(), train.end());
  std::sort(rest.begin(), rest.end());
  return {d.subset(train), d.subset(rest)};
}

} // namespace gpvs
