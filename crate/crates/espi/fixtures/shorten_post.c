/* Shorten decoder helpers (test fixture). */
#include <stdint.h>

typedef struct ShortenContext {
    int bitshift;
    int nwrap;
    int blocksize;
    int channels;
} ShortenContext;

static int init_offset(ShortenContext *s, int count)
{
    int total = 0;
    int j;

    for (j = 0; j < count; j++) {
        total = total + s->nwrap;
    }
    return total;
}

static int clip_sample(int value, int limit)
{
    if (value > limit) {
        return limit;
    }
    if (value < 0) {
        return 0;
    }
    return value;
}

/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */
/* padding */

static void fix_bitshift(ShortenContext *s, int32_t *buffer)
{
    int nblock;
    int i;
    if (s->bitshift != 0) {
        for (i = 0; i < s->blocksize; i++) {
            buffer[i] <<= s->bitshift;
        }
    }
}
