//! Builders for minimal synthetic PE images, used as test fixtures.
//!
//! The images carry a DOS header, a PE header with one `.idata` section and a
//! populated import directory. They are structurally valid but not runnable.

const SECTION_RVA: u32 = 0x1000;
const SECTION_RAW: u32 = 0x200;
const E_LFANEW: usize = 0x40;

#[derive(Debug, Clone)]
enum Sym {
    Name(String),
    Ord(u16),
}

fn w16(buf: &mut [u8], off: usize, v: u16) {
    buf[off..off + 2].copy_from_slice(&v.to_le_bytes());
}

fn w32(buf: &mut [u8], off: usize, v: u32) {
    buf[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

fn w64(buf: &mut [u8], off: usize, v: u64) {
    buf[off..off + 8].copy_from_slice(&v.to_le_bytes());
}

fn align(sec: &mut Vec<u8>, to: usize) {
    while sec.len() % to != 0 {
        sec.push(0);
    }
}

/// PE32 image importing the given symbols by name.
pub fn build_pe32(named: &[(&str, &[&str])]) -> Vec<u8> {
    build_pe(false, named, &[])
}

/// PE32 or PE32+ image with by-name and by-ordinal imports. A DLL listed in
/// both gets its named symbols first, then ordinals; DLLs listed only under
/// `ordinals` are appended after the named ones.
pub fn build_pe(wide: bool, named: &[(&str, &[&str])], ordinals: &[(&str, &[u16])]) -> Vec<u8> {
    let mut dlls: Vec<(String, Vec<Sym>)> = named
        .iter()
        .map(|(dll, syms)| {
            (dll.to_string(), syms.iter().map(|s| Sym::Name(s.to_string())).collect())
        })
        .collect();
    for (dll, ords) in ordinals {
        let syms = ords.iter().map(|&n| Sym::Ord(n));
        match dlls.iter_mut().find(|(name, _)| name == dll) {
            Some((_, existing)) => existing.extend(syms),
            None => dlls.push((dll.to_string(), syms.collect())),
        }
    }
    build_image(wide, &dlls, false)
}

/// PE32 image flagged as a managed assembly (CLR data directory set).
pub fn build_dotnet_pe32() -> Vec<u8> {
    build_image(false, &[], true)
}

/// File offset of the import data-directory entry of a PE32 image built here.
pub fn import_directory_offset_pe32(image: &[u8]) -> usize {
    let e_lfanew = u32::from_le_bytes(image[0x3c..0x40].try_into().unwrap()) as usize;
    e_lfanew + 24 + 96 + 8
}

fn build_image(wide: bool, dlls: &[(String, Vec<Sym>)], clr: bool) -> Vec<u8> {
    let opt_size: usize = if wide { 240 } else { 224 };
    let opt = E_LFANEW + 24;
    let section_table = opt + opt_size;

    let mut img = vec![0u8; SECTION_RAW as usize];
    img[0] = b'M';
    img[1] = b'Z';
    w32(&mut img, 0x3c, E_LFANEW as u32);
    img[E_LFANEW..E_LFANEW + 4].copy_from_slice(b"PE\0\0");

    let coff = E_LFANEW + 4;
    w16(&mut img, coff, if wide { 0x8664 } else { 0x14c });
    w16(&mut img, coff + 2, 1);
    w16(&mut img, coff + 16, opt_size as u16);
    w16(&mut img, coff + 18, 0x0102);

    w16(&mut img, opt, if wide { 0x20b } else { 0x10b });
    if wide {
        w64(&mut img, opt + 24, 0x1_4000_0000);
    } else {
        w32(&mut img, opt + 28, 0x40_0000);
    }
    w32(&mut img, opt + 32, 0x1000); // section alignment
    w32(&mut img, opt + 36, 0x200); // file alignment
    w32(&mut img, opt + 56, 0x2000); // size of image
    w32(&mut img, opt + 60, SECTION_RAW); // size of headers
    let nrva_off = opt + if wide { 108 } else { 92 };
    w32(&mut img, nrva_off, 16);
    let dir_base = opt + if wide { 112 } else { 96 };

    // Section content: import directory table first, patched afterwards.
    let idt_len = (dlls.len() + 1) * 20;
    let mut sec = vec![0u8; idt_len];
    let mut patches = Vec::new();
    for (dll, syms) in dlls {
        let mut lookups: Vec<u64> = Vec::new();
        for sym in syms {
            match sym {
                Sym::Name(name) => {
                    align(&mut sec, 2);
                    lookups.push((SECTION_RVA + sec.len() as u32) as u64);
                    sec.extend_from_slice(&[0, 0]); // hint
                    sec.extend_from_slice(name.as_bytes());
                    sec.push(0);
                }
                Sym::Ord(n) => {
                    let flag = if wide { 1u64 << 63 } else { 1u64 << 31 };
                    lookups.push(flag | *n as u64);
                }
            }
        }
        let name_rva = SECTION_RVA + sec.len() as u32;
        sec.extend_from_slice(dll.as_bytes());
        sec.push(0);

        align(&mut sec, if wide { 8 } else { 4 });
        let ilt_rva = SECTION_RVA + sec.len() as u32;
        let mut push_thunks = |sec: &mut Vec<u8>| {
            for &value in &lookups {
                if wide {
                    sec.extend_from_slice(&value.to_le_bytes());
                } else {
                    sec.extend_from_slice(&(value as u32).to_le_bytes());
                }
            }
            sec.extend_from_slice(if wide { &[0u8; 8][..] } else { &[0u8; 4][..] });
        };
        push_thunks(&mut sec);
        let iat_rva = SECTION_RVA + sec.len() as u32;
        push_thunks(&mut sec);
        patches.push((ilt_rva, name_rva, iat_rva));
    }
    for (i, (ilt, name, iat)) in patches.iter().enumerate() {
        let o = i * 20;
        w32(&mut sec, o, *ilt);
        w32(&mut sec, o + 12, *name);
        w32(&mut sec, o + 16, *iat);
    }

    if !dlls.is_empty() {
        w32(&mut img, dir_base + 8, SECTION_RVA);
        w32(&mut img, dir_base + 12, idt_len as u32);
    }
    if clr {
        w32(&mut img, dir_base + 14 * 8, 0x3000);
        w32(&mut img, dir_base + 14 * 8 + 4, 72);
    }

    let s = section_table;
    img[s..s + 6].copy_from_slice(b".idata");
    w32(&mut img, s + 8, sec.len() as u32);
    w32(&mut img, s + 12, SECTION_RVA);
    w32(&mut img, s + 16, sec.len() as u32);
    w32(&mut img, s + 20, SECTION_RAW);
    w32(&mut img, s + 36, 0xC000_0040);

    img.extend_from_slice(&sec);
    img
}
