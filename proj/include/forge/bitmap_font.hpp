#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "forge/image.hpp"

namespace forge {

/// Fixed 5x7 font: A-Z, 0-9 and space. Rows top to bottom, bit 4 = left column.
inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;

/// Throws InvalidArgument for characters outside the font (lowercase maps up).
const std::array<std::uint8_t, kGlyphHeight>& glyph(char c);

/// Rendered width/height of `text` at integer `scale` (1 px gap between glyphs).
int text_width(std::string_view text, int scale);
inline int text_height(int scale) { return kGlyphHeight * scale; }

/// Marks the glyph pixels of `text` with its top-left corner at (x0, y0);
/// pixels falling outside the mask are clipped.
void render_text(BinaryMask& mask, std::string_view text, int scale, int x0, int y0);

/// Lit pixel count of `text` at scale 1.
int text_ink(std::string_view text);

}  // namespace forge
