#pragma once

// JSON-over-HTTP access to a project directory. Mutations are serialized
// and committed atomically to disk before they become visible; reads see
// the last committed state.

#include <filesystem>
#include <memory>
#include <string>

#include "spheresfm/project.hpp"

namespace spheresfm {

class ProjectServer {
 public:
  // Loads the project and its config. Throws like load_project.
  explicit ProjectServer(const std::filesystem::path& dir);
  ~ProjectServer();
  ProjectServer(const ProjectServer&) = delete;
  ProjectServer& operator=(const ProjectServer&) = delete;

  // Port 0 binds any free port. Returns the bound port; throws IoError.
  int bind(const std::string& host, int port);
  // Serves until stop(); blocks.
  void run();
  void stop();
  void wait_until_ready() const;

  const Config& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace spheresfm
