#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace exitoff {

// Common base so callers can catch the whole library with one handler.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

// Malformed input file; remembers where.
struct ParseError : Error {
  ParseError(std::string file, long line_no, const std::string& what_arg)
      : Error(file + ":" + std::to_string(line_no) + ": " + what_arg),
        path(std::move(file)),
        line(line_no) {}
  std::string path;
  long line;
};

// A metric was requested that needs a class the population does not have
// (e.g. p_miss with zero tail events).
struct DegeneratePopulation : Error {
  using Error::Error;
};

// The energy budget cannot cover block-1 local processing for all events;
// no channel quality can make offloading feasible.
struct InfeasibleBudget : Error {
  using Error::Error;
};

// Channel SNR below the feasibility floor (or zero rate).
struct InfeasibleChannel : Error {
  using Error::Error;
};

// The proximal weight is too small to make the penalized subproblem strongly
// convex; carries the smallest value that would work so callers can retry.
struct LambdaTooSmall : Error {
  LambdaTooSmall(double minimal, const std::string& what_arg)
      : Error(what_arg), minimal_lambda(minimal) {}
  double minimal_lambda;
};

// Solver diverged; carries the recent iterate history for postmortems.
struct NumericalFailure : Error {
  NumericalFailure(std::vector<std::array<double, 2>> history,
                   const std::string& what_arg)
      : Error(what_arg), iterates(std::move(history)) {}
  std::vector<std::array<double, 2>> iterates;
};

}  // namespace exitoff
