#pragma once

// Weight snapshot text format:
//
//   flaplab-net v1
//   input <d0> [<d1> ...]
//   layers <n>
//   <layer line>                  one per layer, see Layer::describe()
//   params <count>
//   <value>                       one per line, layer order, weights then bias
//
// Values use the shortest decimal form that parses back to the same double.

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "flaplab/error.hpp"
#include "flaplab/nn/network.hpp"

namespace flaplab::nn {

inline void save_network(std::ostream& os, Network& net) {
  os << "flaplab-net v1\ninput";
  for (auto d : net.input_shape()) os << ' ' << d;
  os << "\nlayers " << net.layer_count() << '\n';
  for (std::size_t i = 0; i < net.layer_count(); ++i) os << net.layer(i).describe() << '\n';
  const auto values = net.flat_parameters();
  os << "params " << values.size() << '\n';
  char buf[64];
  for (double v : values) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    os.write(buf, end - buf);
    os.put('\n');
  }
  if (!os) throw IoError("failed writing network snapshot");
}

namespace detail {

inline std::string next_line(std::istream& is, const char* what) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError(std::string("network snapshot truncated at ") + what);
  return line;
}

}  // namespace detail

inline Network load_network(std::istream& is) {
  if (detail::next_line(is, "magic") != "flaplab-net v1")
    throw FormatError("not a flaplab-net v1 snapshot");

  std::istringstream in_line(detail::next_line(is, "input"));
  std::string kw;
  in_line >> kw;
  if (kw != "input") throw FormatError("expected 'input' line");
  Shape input;
  for (std::size_t d; in_line >> d;) input.push_back(d);
  if (input.empty()) throw FormatError("empty input shape");

  std::istringstream count_line(detail::next_line(is, "layers"));
  std::size_t n = 0;
  count_line >> kw >> n;
  if (!count_line || kw != "layers") throw FormatError("expected 'layers <n>' line");

  Network net(input);
  try {
    for (std::size_t i = 0; i < n; ++i) {
      const std::string line = detail::next_line(is, "layer list");
      std::istringstream ls(line);
      std::string type;
      ls >> type;
      if (type == "dense") {
        std::size_t a = 0, b = 0;
        ls >> a >> b;
        if (!ls) throw FormatError("bad dense line: '" + line + "'");
        net.add<Dense>(a, b);
      } else if (type == "conv") {
        std::size_t c = 0, k = 0, ks = 0, s = 0, h = 0, w = 0;
        ls >> c >> k >> ks >> s >> h >> w;
        if (!ls) throw FormatError("bad conv line: '" + line + "'");
        net.add<Conv2d>(c, k, ks, s, h, w);
      } else if (type == "relu") {
        net.add<Relu>();
      } else if (type == "flatten") {
        net.add<Flatten>();
      } else if (type == "concat") {
        std::size_t c = 0;
        ls >> c;
        if (!ls) throw FormatError("bad concat line: '" + line + "'");
        net.add<ConcatExtra>(c);
      } else {
        throw FormatError("unknown layer type '" + type + "'");
      }
    }
  } catch (const DomainError& e) {
    throw FormatError(std::string("inconsistent topology: ") + e.what());
  }

  std::istringstream pl(detail::next_line(is, "params"));
  std::size_t count = 0;
  pl >> kw >> count;
  if (!pl || kw != "params") throw FormatError("expected 'params <count>' line");
  if (count != net.parameter_count()) throw FormatError("parameter count does not match topology");
  std::vector<double> values(count);
  for (auto& v : values) {
    const std::string tok = detail::next_line(is, "parameters");
    auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || end != tok.data() + tok.size())
      throw FormatError("bad parameter value '" + tok + "'");
  }
  net.set_flat_parameters(values);
  return net;
}

}  // namespace flaplab::nn
