#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace affdec {

// Dialogue state of a token: who is uttering it.
enum class Role : std::uint8_t { speaker = 0, listener = 1 };

inline constexpr int kNumRoles = 2;

inline int state_id(Role r) { return static_cast<int>(r); }
inline Role other(Role r) {
  return r == Role::speaker ? Role::listener : Role::speaker;
}
inline const char* role_code(Role r) { return r == Role::speaker ? "S" : "L"; }

// The six emotion heads. `baseline` is the plain LM head.
enum class Mode : std::uint8_t { baseline, prepend, ad, ad_de, mtl, adm };

inline constexpr Mode kAllModes[] = {Mode::baseline, Mode::prepend,
                                     Mode::ad,       Mode::ad_de,
                                     Mode::mtl,      Mode::adm};

std::string to_string(Mode m);
Mode parse_mode(std::string_view s);

inline bool uses_unified_offset(Mode m) { return m == Mode::ad; }
inline bool uses_dual_offset(Mode m) {
  return m == Mode::ad_de || m == Mode::adm;
}
inline bool uses_classifier(Mode m) { return m == Mode::mtl || m == Mode::adm; }
inline bool uses_prepend(Mode m) { return m == Mode::prepend; }

// Which target tokens contribute to the training loss.
enum class LossOn : std::uint8_t { all, listener };

std::string to_string(LossOn l);
LossOn parse_loss_on(std::string_view s);

}  // namespace affdec
