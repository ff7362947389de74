#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "polydeform/geometry/types.hpp"

namespace polydeform::io {

struct InstanceRecord {
  std::string label;
  double score = 1.0;
  std::vector<geometry::Polygon> polygons;
};

/// {"instances":[{"label":str,"score":float,"polygons":[[[x,y],...],...]}]}
struct PolygonDocument {
  std::vector<InstanceRecord> instances;
};

/// Compact, deterministic serialization (keys sorted, shortest round-trip
/// number formatting), so parse -> dump is byte-stable.
std::string dump_polygon_json(const PolygonDocument& doc);

/// Throws ValidationError on malformed documents or invalid polygons.
PolygonDocument parse_polygon_json(std::string_view text);

}  // namespace polydeform::io
