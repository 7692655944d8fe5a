#![no_main]

use libfuzzer_sys::fuzz_target;
use m2b::scene::FrameImage;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = FrameImage::from_ppm(data) {
        let again = FrameImage::from_ppm(&img.to_ppm()).expect("reparse our own output");
        assert_eq!((again.height(), again.width()), (img.height(), img.width()));
    }
});
