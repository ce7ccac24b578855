#pragma once

#include <stdexcept>
#include <string>

namespace camsearch {

// Every failure carries a stable machine-readable code ("scene_not_found",
// "over_dense", ...) next to the human-readable message. The CLI and HTTP
// layers forward the code verbatim.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

namespace errc {
inline constexpr const char* kParse = "parse_error";
inline constexpr const char* kValidation = "validation_error";
inline constexpr const char* kOverDense = "over_dense";
inline constexpr const char* kSceneNotFound = "scene_not_found";
inline constexpr const char* kEmptyCameras = "empty_cameras";
inline constexpr const char* kEmptyEvaluation = "empty_evaluation_set";
inline constexpr const char* kShapeMismatch = "shape_mismatch";
inline constexpr const char* kNonFinite = "non_finite";
inline constexpr const char* kInvalidArgument = "invalid_argument";
inline constexpr const char* kIncompleteEpisode = "incomplete_episode";
inline constexpr const char* kIo = "io_error";
inline constexpr const char* kBadCheckpoint = "bad_checkpoint";
inline constexpr const char* kJobNotFound = "job_not_found";
inline constexpr const char* kSearchRunning = "search_running";
}  // namespace errc

}  // namespace camsearch
