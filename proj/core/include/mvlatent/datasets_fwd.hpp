#pragma once

namespace mvlatent {
struct TwoViewDataset;
}
