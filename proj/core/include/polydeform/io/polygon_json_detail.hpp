#pragma once

// nlohmann-level access to the polygon document format, for components that
// embed it inside larger JSON payloads.

#include <nlohmann/json.hpp>

#include "polydeform/io/polygon_json.hpp"

namespace polydeform::io {

nlohmann::json polygon_document_to_json(const PolygonDocument& doc);
PolygonDocument polygon_document_from_json(const nlohmann::json& j);

}  // namespace polydeform::io
