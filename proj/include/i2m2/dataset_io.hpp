#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "i2m2/generative.hpp"
#include "i2m2/text.hpp"

namespace i2m2 {

inline void save_dataset(const Dataset& ds, std::ostream& os) {
  os << "i2m2-dataset v1, C=" << ds.num_classes << ", d1=" << ds.dim1 << ", d2=" << ds.dim2
     << ", kind=" << (ds.kind == FeatureKind::categorical ? "categorical" : "gaussian")
     << ", seed=" << ds.seed << ", spec=" << ds.spec_digest << '\n';
  for (const Sample& s : ds.samples) {
    os << s.label;
    for (double v : s.x1) os << ", " << format_double(v);
    for (double v : s.x2) os << ", " << format_double(v);
    os << '\n';
  }
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  save_dataset(ds, os);
}

inline Dataset load_dataset(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("dataset: empty input");

  Dataset ds;
  const auto fields = split(header, ',');
  if (fields.empty() || strip(fields[0]) != "i2m2-dataset v1")
    throw std::runtime_error("dataset: bad magic line");
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const auto kv = split(strip(fields[i]), '=');
    if (kv.size() != 2) throw std::runtime_error("dataset: malformed header field");
    const auto key = strip(kv[0]);
    const auto value = strip(kv[1]);
    if (key == "C") ds.num_classes = static_cast<int>(parse_int(value));
    else if (key == "d1") ds.dim1 = static_cast<int>(parse_int(value));
    else if (key == "d2") ds.dim2 = static_cast<int>(parse_int(value));
    else if (key == "kind") {
      if (value == "categorical") ds.kind = FeatureKind::categorical;
      else if (value == "gaussian") ds.kind = FeatureKind::gaussian;
      else throw std::runtime_error("dataset: unknown kind '" + std::string(value) + "'");
    } else if (key == "seed") ds.seed = parse_u64(value);
    else if (key == "spec") ds.spec_digest = std::string(value);
    else throw std::runtime_error("dataset: unknown header key '" + std::string(key) + "'");
  }
  if (ds.num_classes < 2 || ds.dim1 < 1 || ds.dim2 < 1)
    throw std::runtime_error("dataset: incomplete header");

  // Categorical samples store one symbol per modality; gaussian store the
  // full feature vectors.
  const std::size_t n1 = ds.kind == FeatureKind::categorical ? 1 : static_cast<std::size_t>(ds.dim1);
  const std::size_t n2 = ds.kind == FeatureKind::categorical ? 1 : static_cast<std::size_t>(ds.dim2);

  std::string line;
  while (std::getline(is, line)) {
    if (strip(line).empty()) continue;
    const auto parts = split(line, ',');
    if (parts.size() != 1 + n1 + n2)
      throw std::runtime_error("dataset: wrong field count on sample line");
    Sample s;
    s.label = static_cast<int>(parse_int(strip(parts[0])));
    if (s.label < 0 || s.label >= ds.num_classes)
      throw std::runtime_error("dataset: label out of range");
    for (std::size_t i = 0; i < n1; ++i) s.x1.push_back(parse_double(strip(parts[1 + i])));
    for (std::size_t i = 0; i < n2; ++i) s.x2.push_back(parse_double(strip(parts[1 + n1 + i])));
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw std::runtime_error("dataset: no samples");
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return load_dataset(is);
}

}  // namespace i2m2
