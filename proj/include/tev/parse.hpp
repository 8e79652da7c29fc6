#pragma once

#include <string>

#include "tev/ir.hpp"

namespace tev {

// Parses the textual IR. Throws Error with kind SyntaxError (carrying
// line/column), DuplicateParam, UnknownIdentifier, or EmptyLoopBody.
// Name availability is enforced during the parse: an expression may
// reference params, earlier definitions, and (inside the body) the loop
// counter; reassignment outside the loop body is rejected.
LoopProgram parseProgram(const std::string& text);

}  // namespace tev
