#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spheresfm {

// Machine-readable failure categories. The CLI prints the category name and
// the HTTP layer maps them onto status codes.
enum class ErrorCategory {
  InvalidArgument,
  DegeneratePoint,
  InsufficientPairs,
  DegenerateConfiguration,
  NoConsensus,
  RankDeficient,
  AmbiguousCheirality,
  ParallelRays,
  DegenerateCurve,
  DisconnectedGraph,
  NonConvergence,
  CollinearCamera,
  DegenerateTrack,
  FrameDegenerate,
  DegenerateDisparity,
  ParseError,
  UnknownImageId,
  EmptyCloud,
  IoError,
  ProjectError,
  MissingPrerequisite,
};

std::string_view category_name(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

}  // namespace spheresfm
