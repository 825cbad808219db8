// lattice.h
//
// The two flat lattices used by the analyses: stack heights (integers with
// bottom and top) and return-address safety {bottom, True, False, top}.
#ifndef SHADOWLAB_LATTICE_H_
#define SHADOWLAB_LATTICE_H_

#include <cstdint>
#include <string>

namespace shadowlab {

class HeightValue {
 public:
  enum class Kind : std::uint8_t { kBottom, kConcrete, kTop };

  constexpr HeightValue() = default;
  static constexpr HeightValue Bottom() { return HeightValue(); }
  static constexpr HeightValue Top() {
    HeightValue h;
    h.kind_ = Kind::kTop;
    return h;
  }
  static constexpr HeightValue Concrete(std::int64_t offset) {
    HeightValue h;
    h.kind_ = Kind::kConcrete;
    h.offset_ = offset;
    return h;
  }

  constexpr Kind kind() const { return kind_; }
  constexpr bool is_bottom() const { return kind_ == Kind::kBottom; }
  constexpr bool is_top() const { return kind_ == Kind::kTop; }
  constexpr bool is_concrete() const { return kind_ == Kind::kConcrete; }
  // Only meaningful when is_concrete().
  constexpr std::int64_t offset() const { return offset_; }

  constexpr bool operator==(const HeightValue& o) const {
    return kind_ == o.kind_ && (kind_ != Kind::kConcrete || offset_ == o.offset_);
  }

  // Flat-lattice join: Bottom is the identity, distinct concretes go to Top.
  constexpr HeightValue join(const HeightValue& o) const {
    if (is_bottom()) return o;
    if (o.is_bottom()) return *this;
    if (*this == o) return *this;
    return Top();
  }
  constexpr bool leq(const HeightValue& o) const { return join(o) == o; }

  // Adds a constant to a concrete height; bottom and top are unchanged.
  constexpr HeightValue shifted(std::int64_t delta) const {
    return is_concrete() ? Concrete(offset_ + delta) : *this;
  }

  std::string to_string() const;

 private:
  Kind kind_ = Kind::kBottom;
  std::int64_t offset_ = 0;
};

enum class SafetyValue : std::uint8_t { kBottom, kTrue, kFalse, kTop };

constexpr SafetyValue join(SafetyValue a, SafetyValue b) {
  if (a == SafetyValue::kBottom) return b;
  if (b == SafetyValue::kBottom) return a;
  if (a == b) return a;
  return SafetyValue::kTop;
}

constexpr bool leq(SafetyValue a, SafetyValue b) { return join(a, b) == b; }

// (x join True) <= True: bottom and True count as safe.
constexpr bool is_ra_safe(SafetyValue v) {
  return leq(join(v, SafetyValue::kTrue), SafetyValue::kTrue);
}

const char* to_string(SafetyValue v);

}  // namespace shadowlab

#endif  // SHADOWLAB_LATTICE_H_
