#ifndef WEAKPARK_ERROR_HPP_
#define WEAKPARK_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace weakpark {

enum class ErrorKind {
  kParse,       // malformed input bytes (JSON, CSV, dates)
  kValidation,  // well-formed input violating a precondition
  kShape,       // tensor / raster shape mismatch
  kIntegrity,   // truncated or corrupted on-disk artifact
  kIo,          // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, const std::string& msg,
                    ErrorKind kind = ErrorKind::kValidation) {
  if (!cond) throw Error(kind, msg);
}

}  // namespace weakpark

#endif  // WEAKPARK_ERROR_HPP_
