#pragma once

#include <string>

#include "sgp/tensor.hpp"

namespace sgp {

// Binary netpbm with maxval 255: P6 for 3-channel images, P5 for 1-channel.
// Values are clamped to [0, 1] and rounded to the nearest 8-bit code, so
// tensors already on the 1/255 grid survive a save/load cycle exactly.
void write_netpbm(const std::string& path, const ImageTensor& img);

// Reads P5 or P6; channel count follows the file. Malformed headers, maxval
// other than 255 and short pixel data raise DataFormatError.
ImageTensor read_netpbm(const std::string& path);

} // namespace sgp
