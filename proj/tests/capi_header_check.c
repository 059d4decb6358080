/* The public header must compile as C. */
#include <stdio.h>

#include "mdlrs/mdlrs.h"

int main(void) {
  mdlrs_dataset* ds = NULL;
  mdlrs_dataset_info info;
  if (mdlrs_dataset_synthesize("{\"train_per_class\": 5, \"test_per_class\": 5}", 0, 0, &ds) != MDLRS_OK) {
    fprintf(stderr, "%s\n", mdlrs_last_error());
    return 1;
  }
  if (mdlrs_dataset_get_info(ds, &info) != MDLRS_OK || info.num_classes != 4) return 1;
  mdlrs_dataset_free(ds);
  return mdlrs_exit_code(MDLRS_ERR_FORMAT) == 2 ? 0 : 1;
}
