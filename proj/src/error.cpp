#include "spheresfm/error.hpp"

namespace spheresfm {

std::string_view category_name(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::InvalidArgument: return "InvalidArgument";
    case ErrorCategory::DegeneratePoint: return "DegeneratePoint";
    case ErrorCategory::InsufficientPairs: return "InsufficientPairs";
    case ErrorCategory::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCategory::NoConsensus: return "NoConsensus";
    case ErrorCategory::RankDeficient: return "RankDeficient";
    case ErrorCategory::AmbiguousCheirality: return "AmbiguousCheirality";
    case ErrorCategory::ParallelRays: return "ParallelRays";
    case ErrorCategory::DegenerateCurve: return "DegenerateCurve";
    case ErrorCategory::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCategory::NonConvergence: return "NonConvergence";
    case ErrorCategory::CollinearCamera: return "CollinearCamera";
    case ErrorCategory::DegenerateTrack: return "DegenerateTrack";
    case ErrorCategory::FrameDegenerate: return "FrameDegenerate";
    case ErrorCategory::DegenerateDisparity: return "DegenerateDisparity";
    case ErrorCategory::ParseError: return "ParseError";
    case ErrorCategory::UnknownImageId: return "UnknownImageId";
    case ErrorCategory::EmptyCloud: return "EmptyCloud";
    case ErrorCategory::IoError: return "IoError";
    case ErrorCategory::ProjectError: return "ProjectError";
    case ErrorCategory::MissingPrerequisite: return "MissingPrerequisite";
  }
  return "Unknown";
}

}  // namespace spheresfm
