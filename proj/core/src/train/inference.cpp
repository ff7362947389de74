#include "polydeform/train/inference.hpp"

#include <algorithm>

#include "polydeform/error.hpp"
#include "polydeform/geometry/box_ops.hpp"
#include "polydeform/geometry/contour.hpp"

namespace polydeform::train {
namespace {

data::CropTransform crop_for(const Image& image, const Box& tight, data::Mode mode, const data::AugmentConfig& augment) {
  const Box box = data::inference_box(tight, mode, augment, image.height, image.width);
  if (!(box.width() > 0 && box.height() > 0)) throw DegenerateError("instance box has zero area");
  return {box, augment.crop_size, false};
}

}  // namespace

std::vector<Polygon> Instance::image_polygons() const {
  std::vector<Polygon> out;
  out.reserve(polygons.size());
  for (const auto& p : polygons) out.push_back(transform.to_image(p));
  return out;
}

Instance instance_from_mask(const Image& image, const BinaryMask& mask, data::Mode mode,
                            const data::AugmentConfig& augment, std::optional<Box> box) {
  augment.validate();
  if (mask.height() != image.height || mask.width() != image.width) {
    throw ShapeError("instance mask size differs from the image");
  }
  if (!box && mask.empty()) throw DegenerateError("instance mask is empty");
  Instance inst;
  inst.transform = crop_for(image, box ? *box : geometry::fit_box(mask), mode, augment);
  const int s = augment.crop_size;
  inst.crop = crop_resize(image, inst.transform.box, s, s);
  inst.polygons = geometry::extract_polygons(crop_resize_mask(mask, inst.transform.box, s, s), augment.vertex_spacing);
  return inst;
}

Instance instance_from_polygons(const Image& image, const std::vector<Polygon>& polygons, data::Mode mode,
                                const data::AugmentConfig& augment, std::optional<Box> box) {
  augment.validate();
  if (polygons.empty()) throw DegenerateError("instance has no polygons");
  Instance inst;
  inst.transform = crop_for(image, box ? *box : geometry::polygon_bounds(polygons), mode, augment);
  const int s = augment.crop_size;
  inst.crop = crop_resize(image, inst.transform.box, s, s);
  const double size = static_cast<double>(s);
  for (const auto& p : polygons) {
    std::vector<geometry::Vec2> v;
    v.reserve(p.size());
    for (const auto& q : p.vertices()) {
      const auto u = inst.transform.to_crop(q);
      v.push_back({std::clamp(u.x, 0.0, size), std::clamp(u.y, 0.0, size)});
    }
    inst.polygons.emplace_back(std::move(v));
  }
  return inst;
}

Instance deform_instance(const model::Model<float>& model, const Instance& instance) {
  if (instance.polygons.empty()) throw DegenerateError("deform_instance: instance has no polygons");
  const auto& fcfg = model.config().features;
  if (instance.crop.height != fcfg.crop_size || instance.crop.width != fcfg.crop_size) {
    throw ShapeError("deform_instance: crop size differs from the model's crop size");
  }
  model::Graph<float> g(autodiff::GraphOptions{false, false});
  const auto fmap = model.feature_map(g, model::image_to_tensor<float>(instance.crop, fcfg));
  Instance out = instance;
  out.polygons.clear();
  for (const auto& p : instance.polygons) {
    const auto res = model.deform(g, fmap, model::polygon_to_tensor<float>(p));
    out.polygons.push_back(model::tensor_to_polygon(res.vertices));
  }
  return out;
}

}  // namespace polydeform::train
