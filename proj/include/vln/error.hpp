#pragma once

#include <stdexcept>
#include <string>

namespace vln {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file or request body. The message names the offending
/// field and the item index, e.g. "heading @ item 0".
class ParseError : public Error {
public:
    using Error::Error;
};

/// A simulator-level move whose destination is outside the reachable set.
class ReachabilityViolation : public Error {
public:
    using Error::Error;
};

/// An action was issued against an episode that has already finished.
class EpisodeDone : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss or parameter.
class Divergence : public Error {
public:
    using Error::Error;
};

}  // namespace vln
