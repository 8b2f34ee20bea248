#include "doeforge/lookup_table.hpp"

namespace doeforge {

template class LookupTable<double, 1>;
template class LookupTable<double, 2>;
template class LookupTable<double, 3>;

}  // namespace doeforge
