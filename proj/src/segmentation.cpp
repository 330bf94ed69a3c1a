#include "dgmeval/segmentation.hpp"

#include "dgmeval/error.hpp"
#include "dgmeval/morphology.hpp"

namespace dgmeval {

binary_mask tissue_masks::breast() const {
  binary_mask out(fat.width, fat.height);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fat[i] | gland[i] | skin[i] | ligament[i];
  return out;
}

binary_mask breast_region(const gray_image& image) {
  binary_mask fg(image.width, image.height);
  for (std::size_t i = 0; i < fg.size(); ++i) fg[i] = image[i] >= kFatMin;
  return fill_holes(fg);
}

skin_split locate_skin(const binary_mask& high_band, const binary_mask& breast_mask, int skin_depth) {
  if (!high_band.same_shape(breast_mask)) throw argument_error("locate_skin: mask shape mismatch");
  skin_split out{binary_mask(high_band.width, high_band.height), binary_mask(high_band.width, high_band.height)};
  if (high_band.count() == 0) return out;
  if (breast_mask.count() == 0) throw argument_error("locate_skin: empty breast mask");
  const binary_mask core = erode(breast_mask, skin_depth);
  for (std::size_t i = 0; i < high_band.size(); ++i) {
    if (!high_band[i]) continue;
    if (breast_mask[i] && !core[i]) {
      out.skin[i] = 1;
    } else {
      out.ligament[i] = 1;
    }
  }
  return out;
}

tissue_masks segment(const gray_image& image) {
  const int w = image.width;
  const int h = image.height;
  tissue_masks m{binary_mask(w, h), binary_mask(w, h), binary_mask(w, h), binary_mask(w, h), binary_mask(w, h)};
  binary_mask high(w, h);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const std::uint8_t v = image[i];
    if (v < kFatMin) {
      m.background[i] = 1;
    } else if (v < kGlandMin) {
      m.fat[i] = 1;
    } else if (v < kHighMin) {
      m.gland[i] = 1;
    } else {
      high[i] = 1;
    }
  }
  if (high.count() > 0) {
    auto split = locate_skin(high, breast_region(image));
    m.skin = std::move(split.skin);
    m.ligament = std::move(split.ligament);
  }
  return m;
}

binary_mask boundary_mask(const tissue_masks& masks) {
  const binary_mask g = dilate(masks.gland);
  const binary_mask f = dilate(masks.fat);
  binary_mask out(g.width, g.height);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = g[i] & f[i] & static_cast<std::uint8_t>(!masks.fat[i]);
  return out;
}

}  // namespace dgmeval
