#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "i2m2/experts.hpp"
#include "i2m2/text.hpp"

namespace i2m2 {

inline void save_stack(const PredictorStack& stack, std::ostream& os) {
  os << "i2m2-model v1\n";
  os << "shape " << (stack.shape.kind == FeatureKind::categorical ? "categorical" : "gaussian")
     << ' ' << stack.shape.num_classes << ' ' << stack.shape.dim1 << ' ' << stack.shape.dim2
     << '\n';
  os << "lambda " << format_double(stack.prior_coefficient) << '\n';
  os << "prior";
  for (double v : stack.prior_logits) os << ' ' << format_double(v);
  os << '\n';
  os << "experts " << stack.experts.size() << '\n';
  for (std::size_t i = 0; i < stack.experts.size(); ++i) {
    const Expert& e = stack.experts[i];
    os << "expert " << role_name(e.role) << " active " << (stack.active[i] ? 1 : 0)
       << " layers " << e.net.layers.size() << '\n';
    for (const auto& layer : e.net.layers) {
      os << "layer " << layer.weight.rows << ' ' << layer.weight.cols << '\n';
      for (std::size_t r = 0; r < layer.weight.rows; ++r) {
        const auto row = layer.weight.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) os << (c ? " " : "") << format_double(row[c]);
        os << '\n';
      }
      for (std::size_t b = 0; b < layer.bias.size(); ++b)
        os << (b ? " " : "") << format_double(layer.bias[b]);
      os << '\n';
    }
  }
}

inline void save_stack(const PredictorStack& stack, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  save_stack(stack, os);
}

namespace detail {

inline std::string next_content_line(std::istream& is) {
  std::string line;
  while (std::getline(is, line)) {
    if (!strip(line).empty()) return std::string(strip(line));
  }
  throw std::runtime_error("model: unexpected end of input");
}

inline std::vector<double> parse_reals(std::string_view line, std::size_t expected) {
  std::vector<double> out;
  for (auto part : split(line, ' ')) {
    part = strip(part);
    if (part.empty()) continue;
    out.push_back(parse_double(part));
  }
  if (out.size() != expected) throw std::runtime_error("model: wrong number of values on line");
  return out;
}

}  // namespace detail

inline PredictorStack load_stack(std::istream& is) {
  if (detail::next_content_line(is) != "i2m2-model v1")
    throw std::runtime_error("model: bad magic line");

  PredictorStack stack;
  {
    std::istringstream ls(detail::next_content_line(is));
    std::string tag, kind;
    ls >> tag >> kind >> stack.shape.num_classes >> stack.shape.dim1 >> stack.shape.dim2;
    if (tag != "shape" || ls.fail()) throw std::runtime_error("model: malformed shape line");
    if (kind == "categorical") stack.shape.kind = FeatureKind::categorical;
    else if (kind == "gaussian") stack.shape.kind = FeatureKind::gaussian;
    else throw std::runtime_error("model: unknown feature kind");
  }
  {
    const std::string line = detail::next_content_line(is);
    if (line.rfind("lambda ", 0) != 0) throw std::runtime_error("model: missing lambda line");
    stack.prior_coefficient = parse_double(strip(std::string_view(line).substr(7)));
  }
  {
    const std::string line = detail::next_content_line(is);
    if (line.rfind("prior", 0) != 0) throw std::runtime_error("model: missing prior line");
    stack.prior_logits = detail::parse_reals(std::string_view(line).substr(5),
                                             static_cast<std::size_t>(stack.shape.num_classes));
  }
  std::size_t expert_count = 0;
  {
    std::istringstream ls(detail::next_content_line(is));
    std::string tag;
    ls >> tag >> expert_count;
    if (tag != "experts" || ls.fail()) throw std::runtime_error("model: missing experts line");
  }

  for (std::size_t e = 0; e < expert_count; ++e) {
    std::istringstream ls(detail::next_content_line(is));
    std::string tag, role, active_tag, layers_tag;
    int active = 0;
    std::size_t layer_count = 0;
    ls >> tag >> role >> active_tag >> active >> layers_tag >> layer_count;
    if (tag != "expert" || active_tag != "active" || layers_tag != "layers" || ls.fail())
      throw std::runtime_error("model: malformed expert line");

    Expert expert;
    expert.role = role_from_name(role);
    for (std::size_t l = 0; l < layer_count; ++l) {
      std::istringstream hs(detail::next_content_line(is));
      std::string layer_tag;
      std::size_t rows = 0, cols = 0;
      hs >> layer_tag >> rows >> cols;
      if (layer_tag != "layer" || hs.fail() || rows == 0 || cols == 0)
        throw std::runtime_error("model: malformed layer line");
      Mlp::Layer layer{RealMatrix(rows, cols), {}};
      for (std::size_t r = 0; r < rows; ++r) {
        const auto values = detail::parse_reals(detail::next_content_line(is), cols);
        std::copy(values.begin(), values.end(), layer.weight.row(r).begin());
      }
      layer.bias = detail::parse_reals(detail::next_content_line(is), rows);
      expert.net.layers.push_back(std::move(layer));
    }
    stack.experts.push_back(std::move(expert));
    stack.active.push_back(active ? 1 : 0);
  }
  if (stack.experts.empty()) throw std::runtime_error("model: no experts");
  return stack;
}

inline PredictorStack load_stack(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return load_stack(is);
}

}  // namespace i2m2
