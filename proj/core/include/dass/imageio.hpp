#pragma once

#include <string>

#include "dass/tensor.hpp"

namespace dass {

// Images are 8-bit RGB PNGs on disk, mapped linearly to [-1, 1] in
// memory. Labels are 8-bit single-channel PNGs holding raw class ids.

void write_image_png(const ImageTensor& img, const std::string& path);  // img: 1x3xHxW
ImageTensor read_image_png(const std::string& path);

void write_label_png(const LabelMap& label, const std::string& path);
LabelMap read_label_png(const std::string& path);

}  // namespace dass
