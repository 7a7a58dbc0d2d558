/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_playground_free: (a: number, b: number) => void;
export const applyOperators: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
export const playground_curves: (a: number, b: number, c: number) => [number, number, number, number];
export const playground_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const playground_status: (a: number) => [number, number, number, number];
export const playground_step: (a: number, b: number) => [number, number, number];
export const previewBlobs: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
