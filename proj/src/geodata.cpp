#include "weakpark/geodata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <utility>

#include <json.hpp>

#include "weakpark/error.hpp"

namespace weakpark {

namespace {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

json parse_json(std::string_view bytes) {
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kParse,
                "malformed GeoJSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

const json& feature_array(const json& doc) {
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array()) {
    throw Error(ErrorKind::kParse, "GeoJSON root is not a FeatureCollection");
  }
  return doc["features"];
}

std::string scalar_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::map<std::string, std::string> read_tags(const json& feature) {
  std::map<std::string, std::string> tags;
  auto it = feature.find("properties");
  if (it == feature.end() || !it->is_object()) return tags;
  for (const auto& [k, v] : it->items()) {
    if (v.is_null() || v.is_object() || v.is_array()) continue;
    tags.emplace(k, scalar_to_string(v));
  }
  return tags;
}

std::string feature_id(const json& feature, const std::map<std::string, std::string>& tags,
                       std::size_t index) {
  if (auto it = feature.find("id"); it != feature.end() && !it->is_null()) {
    return scalar_to_string(*it);
  }
  if (auto it = tags.find("@id"); it != tags.end()) return it->second;
  if (auto it = tags.find("id"); it != tags.end()) return it->second;
  return "feature-" + std::to_string(index);
}

std::optional<GeoPoint> read_position(const json& pos) {
  if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
    return std::nullopt;
  }
  GeoPoint p{pos[0].get<double>(), pos[1].get<double>()};
  if (!p.valid()) return std::nullopt;
  return p;
}

// Strips the closing vertex and consecutive duplicates; nullopt when the ring
// is unusable.
std::optional<Ring> read_ring(const json& coords) {
  if (!coords.is_array()) return std::nullopt;
  Ring ring;
  for (const auto& pos : coords) {
    auto p = read_position(pos);
    if (!p) return std::nullopt;
    if (!ring.empty() && ring.back() == *p) continue;
    ring.push_back(*p);
  }
  while (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
  if (ring.size() < 3) return std::nullopt;
  return ring;
}

std::optional<PolygonGeom> read_polygon(const json& rings) {
  if (!rings.is_array() || rings.empty()) return std::nullopt;
  PolygonGeom poly;
  for (std::size_t i = 0; i < rings.size(); ++i) {
    auto ring = read_ring(rings[i]);
    if (!ring) return std::nullopt;
    if (i == 0) {
      poly.exterior = std::move(*ring);
    } else {
      poly.holes.push_back(std::move(*ring));
    }
  }
  return poly;
}

ojson ring_json(const Ring& ring) {
  ojson out = ojson::array();
  for (const auto& p : ring) out.push_back({p.lon, p.lat});
  out.push_back({ring.front().lon, ring.front().lat});
  return out;
}

bool open_to_customers(const std::map<std::string, std::string>& tags) {
  auto it = tags.find("access");
  if (it == tags.end()) return true;
  const std::string& a = it->second;
  return a == "yes" || a == "customers" || a == "permissive";
}

bool is_customer_parking(const std::map<std::string, std::string>& tags) {
  auto amenity = tags.find("amenity");
  auto kind = tags.find("parking");
  if (amenity == tags.end() || amenity->second != "parking") return false;
  if (kind == tags.end() || (kind->second != "surface" && kind->second != "rooftop")) {
    return false;
  }
  return open_to_customers(tags);
}

struct LocalFrame {
  double lon0, lat0, mx, my;

  explicit LocalFrame(const GeoPoint& origin)
      : lon0(origin.lon),
        lat0(origin.lat),
        mx(meters_per_degree_lon(origin.lat)),
        my(meters_per_degree_lat(origin.lat)) {}

  std::pair<double, double> project(const GeoPoint& p) const {
    return {(p.lon - lon0) * mx, (p.lat - lat0) * my};
  }
};

double ring_signed_area(const Ring& ring, const LocalFrame& f) {
  double acc = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto [x0, y0] = f.project(ring[i]);
    auto [x1, y1] = f.project(ring[(i + 1) % n]);
    acc += x0 * y1 - x1 * y0;
  }
  return 0.5 * acc;
}

double segment_distance(double px, double py, double ax, double ay, double bx,
                        double by) {
  const double dx = bx - ax;
  const double dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0);
  return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
}

bool ring_crossings(const Ring& ring, double lon, double lat) {
  bool inside = false;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const GeoPoint& a = ring[i];
    const GeoPoint& b = ring[j];
    if ((a.lat > lat) != (b.lat > lat)) {
      const double x = (b.lon - a.lon) * (lat - a.lat) / (b.lat - a.lat) + a.lon;
      if (lon < x) inside = !inside;
    }
  }
  return inside;
}

bool better(double d, const std::string& id, double best_d, const std::string* best_id) {
  if (best_id == nullptr) return true;
  if (d < best_d) return true;
  return d == best_d && id < *best_id;
}

}  // namespace

bool GeoPoint::valid() const {
  return std::isfinite(lon) && std::isfinite(lat) && lon >= -180.0 && lon <= 180.0 &&
         lat >= -90.0 && lat <= 90.0;
}

bool PolygonGeom::valid() const {
  auto ring_ok = [](const Ring& r) {
    if (r.size() < 3) return false;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (!r[i].valid() || r[i] == r[(i + 1) % r.size()]) return false;
    }
    return true;
  };
  return ring_ok(exterior) && std::all_of(holes.begin(), holes.end(), ring_ok);
}

std::string_view to_string(PoiCategory c) {
  return c == PoiCategory::kSupermarket ? "supermarket" : "doityourself";
}

std::string_view to_string(SizeClass c) {
  switch (c) {
    case SizeClass::kSmall:
      return "small";
    case SizeClass::kMedium:
      return "medium";
    case SizeClass::kLarge:
      return "large";
  }
  return "small";
}

SizeClass size_class_from_string(std::string_view s) {
  if (s == "small") return SizeClass::kSmall;
  if (s == "medium") return SizeClass::kMedium;
  if (s == "large") return SizeClass::kLarge;
  throw Error(ErrorKind::kParse, "unknown size class '" + std::string(s) + "'");
}

double meters_per_degree_lat(double lat_deg) {
  const double p = deg2rad(lat_deg);
  return 111132.954 - 559.822 * std::cos(2 * p) + 1.175 * std::cos(4 * p);
}

double meters_per_degree_lon(double lat_deg) {
  const double p = deg2rad(lat_deg);
  return 111412.84 * std::cos(p) - 93.5 * std::cos(3 * p) + 0.118 * std::cos(5 * p);
}

ParseResult<PointOfInterest> parse_poi_collection(std::string_view geojson) {
  const json doc = parse_json(geojson);
  ParseResult<PointOfInterest> out;
  const json& features = feature_array(doc);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const json& f = features[i];
    auto tags = read_tags(f);
    auto shop = tags.find("shop");
    if (shop == tags.end()) continue;
    PoiCategory cat;
    if (shop->second == "supermarket") {
      cat = PoiCategory::kSupermarket;
    } else if (shop->second == "doityourself") {
      cat = PoiCategory::kDiy;
    } else {
      continue;
    }
    const json* geom = f.contains("geometry") ? &f["geometry"] : nullptr;
    std::optional<GeoPoint> loc;
    if (geom && geom->is_object() && geom->value("type", "") == "Point" &&
        geom->contains("coordinates")) {
      loc = read_position((*geom)["coordinates"]);
    }
    if (!loc) {
      ++out.skipped;
      continue;
    }
    PointOfInterest poi{feature_id(f, tags, i), cat, *loc, std::nullopt};
    if (auto name = tags.find("name"); name != tags.end()) poi.name = name->second;
    out.items.push_back(std::move(poi));
  }
  return out;
}

ParseResult<ParkingLot> parse_parking_collection(std::string_view geojson) {
  const json doc = parse_json(geojson);
  ParseResult<ParkingLot> out;
  const json& features = feature_array(doc);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const json& f = features[i];
    auto tags = read_tags(f);
    if (!is_customer_parking(tags)) continue;
    if (!f.contains("geometry") || !f["geometry"].is_object()) continue;
    const json& geom = f["geometry"];
    const std::string type = geom.value("type", "");
    if (type != "Polygon" && type != "MultiPolygon") continue;
    const std::string id = feature_id(f, tags, i);
    if (!geom.contains("coordinates") || !geom["coordinates"].is_array()) {
      ++out.skipped;
      continue;
    }
    std::vector<std::pair<std::string, const json*>> parts;
    if (type == "Polygon") {
      parts.emplace_back(id, &geom["coordinates"]);
    } else {
      const json& polys = geom["coordinates"];
      for (std::size_t k = 0; k < polys.size(); ++k) {
        parts.emplace_back(id + "_" + std::to_string(k), &polys[k]);
      }
    }
    for (auto& [part_id, rings] : parts) {
      auto poly = read_polygon(*rings);
      if (!poly) {
        ++out.skipped;
        continue;
      }
      try {
        out.items.push_back(make_lot(part_id, std::move(*poly), tags));
      } catch (const Error&) {
        ++out.skipped;  // zero area
      }
    }
  }
  return out;
}

std::string serialize_poi_collection(const std::vector<PointOfInterest>& pois) {
  ojson features = ojson::array();
  for (const auto& p : pois) {
    ojson props = ojson::object();
    props["shop"] = std::string(to_string(p.category));
    if (p.name) props["name"] = *p.name;
    features.push_back({{"type", "Feature"},
                        {"id", p.id},
                        {"geometry",
                         {{"type", "Point"},
                          {"coordinates", ojson::array({p.location.lon, p.location.lat})}}},
                        {"properties", props}});
  }
  ojson doc = {{"type", "FeatureCollection"}, {"features", features}};
  return doc.dump() + "\n";
}

std::string serialize_parking_collection(const std::vector<ParkingLot>& lots) {
  ojson features = ojson::array();
  for (const auto& lot : lots) {
    ojson rings = ojson::array();
    rings.push_back(ring_json(lot.geometry.exterior));
    for (const auto& h : lot.geometry.holes) rings.push_back(ring_json(h));
    ojson props = ojson::object();
    for (const auto& [k, v] : lot.tags) props[k] = v;
    features.push_back(
        {{"type", "Feature"},
         {"id", lot.id},
         {"geometry", {{"type", "Polygon"}, {"coordinates", rings}}},
         {"properties", props},
         {"derived",
          {{"area_sqm", lot.area_sqm},
           {"size_class", std::string(to_string(lot.size_class))}}}});
  }
  ojson doc = {{"type", "FeatureCollection"}, {"features", features}};
  return doc.dump() + "\n";
}

double geodesic_area_sqm(const PolygonGeom& polygon) {
  require(polygon.exterior.size() >= 3, "polygon needs at least 3 exterior vertices");
  double lat_sum = 0.0;
  for (const auto& p : polygon.exterior) lat_sum += p.lat;
  GeoPoint origin{polygon.exterior.front().lon,
                  lat_sum / static_cast<double>(polygon.exterior.size())};
  const LocalFrame frame(origin);
  double area = std::abs(ring_signed_area(polygon.exterior, frame));
  for (const auto& h : polygon.holes) area -= std::abs(ring_signed_area(h, frame));
  if (!(area > 1e-6) || !std::isfinite(area)) {
    throw Error(ErrorKind::kValidation, "degenerate polygon (zero area)");
  }
  return area;
}

SizeClass classify_size(double area_sqm) {
  if (!std::isfinite(area_sqm) || area_sqm <= 0.0) {
    throw Error(ErrorKind::kValidation, "area must be positive and finite");
  }
  if (area_sqm <= kSmallMaxSqm) return SizeClass::kSmall;
  if (area_sqm >= kLargeMinSqm) return SizeClass::kLarge;
  return SizeClass::kMedium;
}

ParkingLot make_lot(std::string id, PolygonGeom geometry,
                    std::map<std::string, std::string> tags) {
  ParkingLot lot;
  lot.id = std::move(id);
  lot.area_sqm = geodesic_area_sqm(geometry);
  lot.size_class = classify_size(lot.area_sqm);
  lot.geometry = std::move(geometry);
  lot.tags = std::move(tags);
  return lot;
}

bool polygon_contains(const PolygonGeom& polygon, double lon, double lat) {
  bool inside = ring_crossings(polygon.exterior, lon, lat);
  for (const auto& h : polygon.holes) {
    if (ring_crossings(h, lon, lat)) inside = !inside;
  }
  return inside;
}

double point_polygon_distance_m(const GeoPoint& p, const PolygonGeom& polygon) {
  if (polygon_contains(polygon, p.lon, p.lat)) return 0.0;
  const LocalFrame frame(p);
  double best = std::numeric_limits<double>::infinity();
  auto scan = [&](const Ring& ring) {
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
      auto [ax, ay] = frame.project(ring[i]);
      auto [bx, by] = frame.project(ring[(i + 1) % n]);
      best = std::min(best, segment_distance(0.0, 0.0, ax, ay, bx, by));
    }
  };
  scan(polygon.exterior);
  for (const auto& h : polygon.holes) scan(h);
  return best;
}

// ---------------------------------------------------------------------------
// SpatialIndex

namespace {
constexpr std::size_t kNodeCapacity = 16;

// Sort-tile-recursive ordering of items by box centre.
template <typename CenterFn>
std::vector<std::size_t> str_order(std::size_t n, CenterFn center) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  const std::size_t leaves = (n + kNodeCapacity - 1) / kNodeCapacity;
  const auto slices =
      static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(leaves))));
  const std::size_t per_slice = slices * kNodeCapacity;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return center(a).first < center(b).first; });
  for (std::size_t s = 0; s < n; s += per_slice) {
    auto end = idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + per_slice));
    std::stable_sort(idx.begin() + static_cast<std::ptrdiff_t>(s), end,
                     [&](std::size_t a, std::size_t b) {
                       return center(a).second < center(b).second;
                     });
  }
  return idx;
}
}  // namespace

SpatialIndex::SpatialIndex(std::vector<ParkingLot> lots) : lots_(std::move(lots)) {
  require(!lots_.empty(), "cannot build a spatial index over zero lots");
  lot_boxes_.reserve(lots_.size());
  for (const auto& lot : lots_) {
    Box b{180.0, 90.0, -180.0, -90.0};
    for (const auto& p : lot.geometry.exterior) {
      b.min_lon = std::min(b.min_lon, p.lon);
      b.min_lat = std::min(b.min_lat, p.lat);
      b.max_lon = std::max(b.max_lon, p.lon);
      b.max_lat = std::max(b.max_lat, p.lat);
    }
    lot_boxes_.push_back(b);
  }
  auto box_center = [](const Box& b) {
    return std::make_pair(0.5 * (b.min_lon + b.max_lon), 0.5 * (b.min_lat + b.max_lat));
  };
  auto unite = [](Box a, const Box& b) {
    a.min_lon = std::min(a.min_lon, b.min_lon);
    a.min_lat = std::min(a.min_lat, b.min_lat);
    a.max_lon = std::max(a.max_lon, b.max_lon);
    a.max_lat = std::max(a.max_lat, b.max_lat);
    return a;
  };

  order_ = str_order(lots_.size(), [&](std::size_t i) { return box_center(lot_boxes_[i]); });
  std::vector<Node> level;
  for (std::size_t s = 0; s < order_.size(); s += kNodeCapacity) {
    const std::size_t count = std::min(kNodeCapacity, order_.size() - s);
    Box b = lot_boxes_[order_[s]];
    for (std::size_t k = 1; k < count; ++k) b = unite(b, lot_boxes_[order_[s + k]]);
    level.push_back({b, s, count, true});
  }
  while (level.size() > 1) {
    auto perm = str_order(level.size(), [&](std::size_t i) { return box_center(level[i].box); });
    const std::size_t base = nodes_.size();
    for (std::size_t i : perm) nodes_.push_back(level[i]);
    std::vector<Node> parents;
    for (std::size_t s = 0; s < perm.size(); s += kNodeCapacity) {
      const std::size_t count = std::min(kNodeCapacity, perm.size() - s);
      Box b = nodes_[base + s].box;
      for (std::size_t k = 1; k < count; ++k) b = unite(b, nodes_[base + s + k].box);
      parents.push_back({b, base + s, count, false});
    }
    level = std::move(parents);
  }
  nodes_.push_back(level.front());
  root_ = nodes_.size() - 1;
}

double SpatialIndex::box_distance_m(const Box& b, const GeoPoint& p) {
  const double dlon = std::max({b.min_lon - p.lon, 0.0, p.lon - b.max_lon});
  const double dlat = std::max({b.min_lat - p.lat, 0.0, p.lat - b.max_lat});
  return std::hypot(dlon * meters_per_degree_lon(p.lat), dlat * meters_per_degree_lat(p.lat));
}

Nearest SpatialIndex::nearest(const GeoPoint& p) const {
  // Best-first search. Queue entries are nodes keyed by a box lower bound;
  // the projection is axis-scaled, so the bound never exceeds the exact
  // distance up to rounding, which the slack absorbs.
  constexpr double kSlack = 1e-9;
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  queue.emplace(box_distance_m(nodes_[root_].box, p), root_);
  double best_d = std::numeric_limits<double>::infinity();
  std::size_t best = lots_.size();
  while (!queue.empty()) {
    auto [bound, node_idx] = queue.top();
    queue.pop();
    if (bound > best_d + kSlack) break;
    const Node& node = nodes_[node_idx];
    for (std::size_t k = 0; k < node.count; ++k) {
      if (node.leaf) {
        const std::size_t li = order_[node.first + k];
        if (box_distance_m(lot_boxes_[li], p) > best_d + kSlack) continue;
        const double d = point_polygon_distance_m(p, lots_[li].geometry);
        if (better(d, lots_[li].id, best_d, best < lots_.size() ? &lots_[best].id : nullptr)) {
          best_d = d;
          best = li;
        }
      } else {
        const std::size_t child = node.first + k;
        const double b = box_distance_m(nodes_[child].box, p);
        if (b <= best_d + kSlack) queue.emplace(b, child);
      }
    }
  }
  return {best, best_d};
}

SpatialIndex build_spatial_index(std::vector<ParkingLot> lots) {
  return SpatialIndex(std::move(lots));
}

std::optional<MatchResult> match_poi_to_lot(const PointOfInterest& poi,
                                            const SpatialIndex& index, double threshold_m) {
  require(threshold_m > 0.0, "proximity threshold must be positive");
  const Nearest n = index.nearest(poi.location);
  if (n.distance_m > threshold_m) return std::nullopt;
  return MatchResult{poi.id, index.lots()[n.index].id, n.distance_m};
}

std::optional<MatchResult> match_poi_linear(const PointOfInterest& poi,
                                            const std::vector<ParkingLot>& lots,
                                            double threshold_m) {
  require(threshold_m > 0.0, "proximity threshold must be positive");
  const ParkingLot* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& lot : lots) {
    const double d = point_polygon_distance_m(poi.location, lot.geometry);
    if (better(d, lot.id, best_d, best ? &best->id : nullptr)) {
      best = &lot;
      best_d = d;
    }
  }
  if (best == nullptr || best_d > threshold_m) return std::nullopt;
  return MatchResult{poi.id, best->id, best_d};
}

std::string match_record_json(const MatchResult& m, const ParkingLot& lot) {
  ojson rec = {{"poi_id", m.poi_id},
               {"lot_id", m.lot_id},
               {"distance_m", m.distance_m},
               {"area_sqm", lot.area_sqm},
               {"size_class", std::string(to_string(lot.size_class))}};
  return rec.dump();
}

std::string overpass_to_geojson(std::string_view overpass_json) {
  json doc = json::parse(overpass_json, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("elements") ||
      !doc["elements"].is_array()) {
    throw Error(ErrorKind::kParse, "not an Overpass JSON response (missing 'elements')");
  }
  ojson features = ojson::array();
  for (const auto& el : doc["elements"]) {
    const std::string type = el.value("type", "");
    ojson f;
    f["type"] = "Feature";
    f["id"] = type + "/" + el.value("id", json(0)).dump();
    if (type == "node" && el.contains("lat") && el.contains("lon")) {
      f["geometry"] = {{"type", "Point"},
                       {"coordinates", {el["lon"].get<double>(), el["lat"].get<double>()}}};
    } else if (type == "way" && el.contains("geometry") && el["geometry"].is_array()) {
      ojson ring = ojson::array();
      for (const auto& pt : el["geometry"]) {
        ring.push_back({pt.at("lon").get<double>(), pt.at("lat").get<double>()});
      }
      if (ring.size() < 4 || ring.front() != ring.back()) continue;
      f["geometry"] = {{"type", "Polygon"}, {"coordinates", ojson::array({ring})}};
    } else {
      continue;
    }
    ojson props = ojson::object();
    if (el.contains("tags") && el["tags"].is_object()) {
      for (const auto& [k, v] : el["tags"].items()) props[k] = v;
    }
    f["properties"] = std::move(props);
    features.push_back(std::move(f));
  }
  ojson out;
  out["type"] = "FeatureCollection";
  out["features"] = std::move(features);
  return out.dump(2) + "\n";
}

}  // namespace weakpark
