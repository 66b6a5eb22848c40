#pragma once

#include <stdexcept>
#include <string>

namespace curlcurl {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

#define CURLCURL_DEFINE_ERROR(Name)                                           \
  class Name : public Error                                                   \
  {                                                                           \
  public:                                                                     \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {}      \
  }

// mesh
CURLCURL_DEFINE_ERROR(NonConforming);
CURLCURL_DEFINE_ERROR(UnlabeledBoundary);
CURLCURL_DEFINE_ERROR(InvertedCell);
CURLCURL_DEFINE_ERROR(ClosureOverflow);
CURLCURL_DEFINE_ERROR(UnmappedReference);

// fe
CURLCURL_DEFINE_ERROR(UnsupportedDegree);
CURLCURL_DEFINE_ERROR(UnsupportedOrder);
CURLCURL_DEFINE_ERROR(IncompatibleQuery);

// solver
CURLCURL_DEFINE_ERROR(SingularSystem);

// equilibration
CURLCURL_DEFINE_ERROR(CompatibilityViolation);
CURLCURL_DEFINE_ERROR(SingularPatchSystem);
CURLCURL_DEFINE_ERROR(EigenFailure);
CURLCURL_DEFINE_ERROR(DegreeMismatch);

// cases
CURLCURL_DEFINE_ERROR(BadAngle);
CURLCURL_DEFINE_ERROR(TraceCheckFailure);

// configuration
CURLCURL_DEFINE_ERROR(InvalidConfig);

#undef CURLCURL_DEFINE_ERROR

/// Thrown by the MEDIT reader; carries the 1-based line number of the offending token.
class ParseError : public Error
{
public:
  ParseError(const std::string& what, int line)
    : Error("ParseError: line " + std::to_string(line) + ": " + what), line_(line)
  {}

  int line() const noexcept { return line_; }

private:
  int line_;
};

} // namespace curlcurl
