// Writes the bundled synthetic fixtures.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "spheresfm/error.hpp"
#include "spheresfm/fixtures.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate synthetic panorama fixtures", "spheresfm_fixture"};
  std::string kind;
  std::string dir;
  spheresfm::FixtureOptions options;
  int height = options.size.height;
  app.add_option("kind", kind, "two-camera or six-camera")
      ->required()
      ->check(CLI::IsMember({"two-camera", "six-camera"}));
  app.add_option("dir", dir, "Output directory")->required();
  app.add_option("--height", height, "Panorama height in pixels")->capture_default_str();
  app.add_option("--seed", options.seed)->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  options.size = spheresfm::ImageSize::from_height(height);
  try {
    if (kind == "two-camera") {
      spheresfm::write_two_camera_fixture(dir, options);
    } else {
      spheresfm::write_six_camera_fixture(dir, options);
    }
  } catch (const spheresfm::Error& e) {
    std::cerr << "error: " << spheresfm::category_name(e.category()) << ": " << e.what() << "\n";
    return 1;
  }
  std::cout << "wrote " << kind << " fixture to " << dir << "\n";
  return 0;
}
