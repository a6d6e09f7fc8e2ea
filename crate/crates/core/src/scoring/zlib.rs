//! DEFLATE size through the system zlib, so compressed lengths match the
//! reference implementation byte for byte.

use alloc::vec;
use core::ffi::{c_int, c_ulong};

#[link(name = "z")]
extern "C" {
    fn compressBound(source_len: c_ulong) -> c_ulong;
    fn compress2(dest: *mut u8, dest_len: *mut c_ulong, source: *const u8, source_len: c_ulong, level: c_int) -> c_int;
}

const Z_OK: c_int = 0;

/// Length of the zlib-container stream for `data` at `level`.
pub fn compressed_len(data: &[u8], level: i32) -> usize {
    // SAFETY: `dest` holds `compressBound(len)` bytes, which zlib guarantees
    // is enough for one-shot compression; both buffers outlive the call.
    unsafe {
        let bound = compressBound(data.len() as c_ulong);
        let mut dest = vec![0u8; bound as usize];
        let mut dest_len = bound;
        let rc = compress2(dest.as_mut_ptr(), &mut dest_len, data.as_ptr(), data.len() as c_ulong, level as c_int);
        assert_eq!(rc, Z_OK, "compress2 failed with {rc}");
        dest_len as usize
    }
}
