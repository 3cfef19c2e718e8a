#pragma once

#include <array>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spheresfm/epipolar.hpp"
#include "spheresfm/image.hpp"
#include "spheresfm/multiview.hpp"
#include "spheresfm/sphere_cam.hpp"

namespace spheresfm {

enum class MatchSource { Manual, Imported, Augmented };

std::string_view source_name(MatchSource s);
MatchSource parse_source(std::string_view name);

struct Correspondence {
  int id = 0;
  std::string image_a;
  std::string image_b;
  PixelCoord pa;
  PixelCoord pb;
  MatchSource source = MatchSource::Manual;
  std::optional<double> residual;
  std::optional<double> score;
};

// Cube layout: +Z is the equirect pole (up). Side faces look along their
// axis with +Z up; the +Z face has -X towards the top of the image, the -Z
// face has +X towards the top. Face v grows downward.
enum class CubeFace { PosX = 0, NegX, PosY, NegY, PosZ, NegZ };

std::string_view face_name(CubeFace f);
std::optional<CubeFace> parse_face(std::string_view name);

struct CubeFacePoint {
  CubeFace face = CubeFace::PosX;
  double u = 0.0;
  double v = 0.0;
};

struct CubeFaceSet {
  int face_size = 0;
  std::string source_id;
  std::array<Raster, 6> faces;

  const Raster& face(CubeFace f) const { return faces[std::size_t(f)]; }
};

// Direction (not normalized) through continuous face coordinate (u, v).
Vec3 cube_face_direction(const CubeFacePoint& p, int face_size);
CubeFacePoint direction_to_cube_face(const Vec3& d, int face_size);

PixelCoord cubeface_to_equirect(const CubeFacePoint& p, int face_size, const ImageSize& size);
CubeFacePoint equirect_to_cubeface(const PixelCoord& p, const ImageSize& size, int face_size);

// Bilinear resampling of the panorama onto six 90 degree faces.
CubeFaceSet equirect_to_cubemap(const EquirectImage& img, int face_size,
                                const std::string& source_id = {});
CubeFaceSet equirect_to_cubemap_serial(const EquirectImage& img, int face_size,
                                       const std::string& source_id = {});

// Line-delimited JSON records; see docs/formats.md. Cube-face records are
// converted to panorama coordinates. Throws ParseError or UnknownImageId.
std::vector<Correspondence> import_matches(std::istream& in,
                                           const std::map<std::string, ImageSize>& images);

BearingPair to_bearings(const Correspondence& c, const ImageSize& size_a, const ImageSize& size_b);

// manual plus every imported match with residual < epsilon (re-labelled as
// augmented). Matches within 1 px on both sides of an already kept record
// are dropped, so manual records win. Residuals are recorded on every output.
std::vector<Correspondence> augment_pool(std::span<const Correspondence> manual,
                                         std::span<const Correspondence> imported,
                                         const FundamentalMatrix& F, double epsilon,
                                         const ImageSize& size_a, const ImageSize& size_b);

struct TrackSet {
  std::vector<Track> tracks;
};

// Transitive closure of pairwise matches. A point is identified by its image
// and its coordinates rounded to 1e-3 px. Edges are merged in a canonical
// order; an edge that would put two different points of one image into the
// same track is rejected and both fragments are flagged inconsistent.
// Throws UnknownImageId for images missing from camera_index.
TrackSet build_tracks(std::span<const Correspondence> correspondences,
                      const std::map<std::string, int>& camera_index);

}  // namespace spheresfm
