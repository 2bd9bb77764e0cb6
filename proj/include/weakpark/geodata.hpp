#ifndef WEAKPARK_GEODATA_HPP_
#define WEAKPARK_GEODATA_HPP_

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace weakpark {

struct GeoPoint {
  double lon = 0.0;  // degrees, [-180, 180]
  double lat = 0.0;  // degrees, [-90, 90]

  bool valid() const;
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

using Ring = std::vector<GeoPoint>;

/// Exterior ring plus holes, each stored unclosed (first vertex not repeated).
struct PolygonGeom {
  Ring exterior;
  std::vector<Ring> holes;

  /// >= 3 vertices per ring, finite in-range coordinates and no two
  /// consecutive (cyclically) identical vertices.
  bool valid() const;
  friend bool operator==(const PolygonGeom&, const PolygonGeom&) = default;
};

enum class PoiCategory { kSupermarket, kDiy };
enum class SizeClass { kSmall, kMedium, kLarge };

std::string_view to_string(PoiCategory c);
std::string_view to_string(SizeClass c);
SizeClass size_class_from_string(std::string_view s);

/// Report ordering: large, medium, small.
inline constexpr SizeClass kReportOrder[] = {SizeClass::kLarge, SizeClass::kMedium,
                                             SizeClass::kSmall};

struct PointOfInterest {
  std::string id;
  PoiCategory category = PoiCategory::kSupermarket;
  GeoPoint location;
  std::optional<std::string> name;
};

struct ParkingLot {
  std::string id;
  PolygonGeom geometry;
  std::map<std::string, std::string> tags;
  double area_sqm = 0.0;
  SizeClass size_class = SizeClass::kSmall;
};

struct MatchResult {
  std::string poi_id;
  std::string lot_id;
  double distance_m = 0.0;
};

template <typename T>
struct ParseResult {
  std::vector<T> items;
  std::size_t skipped = 0;  // matching features dropped with a warning
};

// Size-class boundaries in square meters.
inline constexpr double kSmallMaxSqm = 5000.0;
inline constexpr double kLargeMinSqm = 10000.0;
inline constexpr double kDefaultProximityM = 10.0;

/// Local equirectangular scale factors (meters per degree) at a latitude.
double meters_per_degree_lat(double lat_deg);
double meters_per_degree_lon(double lat_deg);

ParseResult<PointOfInterest> parse_poi_collection(std::string_view geojson);
ParseResult<ParkingLot> parse_parking_collection(std::string_view geojson);

std::string serialize_poi_collection(const std::vector<PointOfInterest>& pois);
std::string serialize_parking_collection(const std::vector<ParkingLot>& lots);

/// Shoelace area in a local equirectangular frame at the exterior's mean
/// latitude; holes are subtracted. Throws on zero-area polygons.
double geodesic_area_sqm(const PolygonGeom& polygon);

SizeClass classify_size(double area_sqm);

/// Builds a ParkingLot with derived area and size class.
ParkingLot make_lot(std::string id, PolygonGeom geometry,
                    std::map<std::string, std::string> tags = {});

/// Distance in meters from a point to a polygon (0 when inside), measured in
/// the equirectangular frame centred on the point.
double point_polygon_distance_m(const GeoPoint& p, const PolygonGeom& polygon);

/// Even-odd containment over all rings, in degree space.
bool polygon_contains(const PolygonGeom& polygon, double lon, double lat);

struct Nearest {
  std::size_t index;  // into the lot list the index was built from
  double distance_m;
};

/// Packed R-tree (sort-tile-recursive) over lot bounding boxes. Read-only
/// after construction; queries are safe from multiple threads.
class SpatialIndex {
 public:
  explicit SpatialIndex(std::vector<ParkingLot> lots);

  /// Minimum-distance lot, ties broken by smaller lot id.
  Nearest nearest(const GeoPoint& p) const;

  const std::vector<ParkingLot>& lots() const { return lots_; }

 private:
  struct Box {
    double min_lon, min_lat, max_lon, max_lat;
  };
  struct Node {
    Box box;
    std::size_t first;  // children (inner) or lot indices (leaf) in order_
    std::size_t count;
    bool leaf;
  };

  std::vector<ParkingLot> lots_;
  std::vector<Box> lot_boxes_;
  std::vector<std::size_t> order_;  // leaf payloads
  std::vector<Node> nodes_;
  std::size_t root_ = 0;

  static double box_distance_m(const Box& b, const GeoPoint& p);
};

SpatialIndex build_spatial_index(std::vector<ParkingLot> lots);

std::optional<MatchResult> match_poi_to_lot(const PointOfInterest& poi,
                                            const SpatialIndex& index,
                                            double threshold_m = kDefaultProximityM);

/// Reference matcher: exhaustive scan with the same distance and tie rule.
std::optional<MatchResult> match_poi_linear(const PointOfInterest& poi,
                                            const std::vector<ParkingLot>& lots,
                                            double threshold_m = kDefaultProximityM);

/// One NDJSON line: {poi_id, lot_id, distance_m, area_sqm, size_class}.
std::string match_record_json(const MatchResult& m, const ParkingLot& lot);

/// Converts an Overpass API JSON response (`out geom`) to a GeoJSON
/// FeatureCollection. Nodes become Points, closed ways Polygons; ids are
/// "<type>/<id>". Relations are dropped.
std::string overpass_to_geojson(std::string_view overpass_json);

}  // namespace weakpark

#endif  // WEAKPARK_GEODATA_HPP_
