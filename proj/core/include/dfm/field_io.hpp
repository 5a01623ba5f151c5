#ifndef DFM_FIELD_IO_HPP_
#define DFM_FIELD_IO_HPP_

#include <iosfwd>
#include <string>

#include "dfm/direction_field.hpp"
#include "dfm/png.hpp"

namespace dfm {

// Field files: the ASCII line "DFM-DF v1 <H> <W>\n" followed by 2*H*W
// little-endian float32 values, channel-major (all x, then all y).
void write_direction_field(std::ostream& os, const DirectionField& df);
void write_direction_field(const std::string& path, const DirectionField& df);
DirectionField read_direction_field(std::istream& is);
DirectionField read_direction_field(const std::string& path);

/// Angle -> hue, magnitude (clipped to 1) -> value, full saturation.
RgbImage render_direction_field(const DirectionField& df);

}  // namespace dfm

#endif  // DFM_FIELD_IO_HPP_
