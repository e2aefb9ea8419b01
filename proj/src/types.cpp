#include "affdec/types.hpp"

#include <stdexcept>

namespace affdec {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::baseline: return "baseline";
    case Mode::prepend: return "prepend";
    case Mode::ad: return "ad";
    case Mode::ad_de: return "ad_de";
    case Mode::mtl: return "mtl";
    case Mode::adm: return "adm";
  }
  return "baseline";
}

Mode parse_mode(std::string_view s) {
  for (Mode m : kAllModes)
    if (to_string(m) == s) return m;
  throw std::invalid_argument(
      "unknown mode \"" + std::string(s) +
      "\" (expected baseline, prepend, ad, ad_de, mtl or adm)");
}

std::string to_string(LossOn l) { return l == LossOn::all ? "all" : "listener"; }

LossOn parse_loss_on(std::string_view s) {
  if (s == "all") return LossOn::all;
  if (s == "listener") return LossOn::listener;
  throw std::invalid_argument("unknown loss target \"" + std::string(s) +
                              "\" (expected listener or all)");
}

}  // namespace affdec
