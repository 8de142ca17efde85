#pragma once

namespace pbl {

// Fixed ids shared by the tokenizer and the model. The verbalizer ids follow
// class order: negative (0), neutral (1), positive (2).
inline constexpr int kBosId = 0;
inline constexpr int kPadId = 1;
inline constexpr int kUnkId = 2;
inline constexpr int kNegativeId = 3;
inline constexpr int kNeutralId = 4;
inline constexpr int kPositiveId = 5;
inline constexpr int kReservedTokens = 6;

}  // namespace pbl
