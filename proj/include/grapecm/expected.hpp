#pragma once

#include <string>
#include <utility>
#include <variant>

namespace grapecm {

// Error value carried by Expected<T>. `what` is a short machine-greppable
// message, e.g. "missing field: type".
struct Error {
  std::string what;
};

inline Error make_error(std::string msg) { return Error{std::move(msg)}; }

// Minimal value-or-error wrapper (std::expected is C++23).
template <typename T>
class Expected {
 public:
  Expected(T value) : state_(std::move(value)) {}
  Expected(Error err) : state_(std::move(err)) {}

  bool ok() const { return std::holds_alternative<T>(state_); }
  explicit operator bool() const { return ok(); }

  const T& value() const& { return std::get<T>(state_); }
  T& value() & { return std::get<T>(state_); }
  T&& value() && { return std::get<T>(std::move(state_)); }

  const Error& error() const { return std::get<Error>(state_); }

 private:
  std::variant<T, Error> state_;
};

}  // namespace grapecm
