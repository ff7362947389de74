#include "polydeform/io/polygon_json.hpp"

#include <nlohmann/json.hpp>

#include "polydeform/error.hpp"
#include "polydeform/io/polygon_json_detail.hpp"

namespace polydeform::io {

using nlohmann::json;

json polygon_document_to_json(const PolygonDocument& doc) {
  json instances = json::array();
  for (const auto& inst : doc.instances) {
    json polys = json::array();
    for (const auto& poly : inst.polygons) {
      json pts = json::array();
      for (const auto& v : poly.vertices()) pts.push_back({v.x, v.y});
      polys.push_back(std::move(pts));
    }
    instances.push_back({{"label", inst.label}, {"score", inst.score}, {"polygons", std::move(polys)}});
  }
  return json{{"instances", std::move(instances)}};
}

PolygonDocument polygon_document_from_json(const json& j) {
  try {
    PolygonDocument doc;
    for (const auto& inst : j.at("instances")) {
      InstanceRecord rec;
      rec.label = inst.at("label").get<std::string>();
      rec.score = inst.value("score", 1.0);
      for (const auto& poly : inst.at("polygons")) {
        std::vector<geometry::Vec2> vertices;
        for (const auto& pt : poly) {
          if (!pt.is_array() || pt.size() != 2) throw ValidationError("polygon vertex must be [x, y]");
          vertices.push_back({pt[0].get<double>(), pt[1].get<double>()});
        }
        rec.polygons.emplace_back(std::move(vertices));
      }
      doc.instances.push_back(std::move(rec));
    }
    return doc;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("polygon JSON: ") + e.what());
  } catch (const ContractError& e) {
    throw ValidationError(std::string("polygon JSON: ") + e.what());
  } catch (const NumericalError& e) {
    throw ValidationError(std::string("polygon JSON: ") + e.what());
  }
}

std::string dump_polygon_json(const PolygonDocument& doc) {
  return polygon_document_to_json(doc).dump();
}

PolygonDocument parse_polygon_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("polygon JSON: ") + e.what());
  }
  return polygon_document_from_json(j);
}

}  // namespace polydeform::io
