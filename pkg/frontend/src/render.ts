/**
 * Panorama rendering: the seat's equirectangular image wraps the camera,
 * sampled per pixel in a fragment shader (camera stays at the origin,
 * exactly like the seat's capture point). Overlays (element quads, remote
 * avatars) are drawn on a 2D canvas above it using the same camera math
 * that the unit tests pin down.
 */

import { cameraQuat, quatRotate, vec3, Vec3 } from "./geometry.js";

const VERTEX_SRC = `#version 300 es
const vec2 CORNERS[3] = vec2[3](vec2(-1.0, -1.0), vec2(3.0, -1.0), vec2(-1.0, 3.0));
out vec2 vNdc;
void main() {
  vec2 c = CORNERS[gl_VertexID];
  vNdc = c;
  gl_Position = vec4(c, 0.0, 1.0);
}`;

const FRAGMENT_SRC = `#version 300 es
precision highp float;
uniform vec3 uRight;
uniform vec3 uUp;
uniform vec3 uForward;
uniform vec2 uTan;
uniform sampler2D uTex;
in vec2 vNdc;
out vec4 outColor;
void main() {
  vec3 d = normalize(uForward + vNdc.x * uTan.x * uRight + vNdc.y * uTan.y * uUp);
  float u = 0.5 + atan(d.x, -d.z) / 6.28318530717958648;
  float v = 0.5 - asin(clamp(d.y, -1.0, 1.0)) / 3.14159265358979324;
  outColor = texture(uTex, vec2(u, v));
}`;

export class PanoRenderer {
  private gl: WebGL2RenderingContext;
  private uniforms: {
    right: WebGLUniformLocation;
    up: WebGLUniformLocation;
    forward: WebGLUniformLocation;
    tan: WebGLUniformLocation;
  };

  constructor(private readonly canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl2");
    if (!gl) throw new Error("WebGL2 is required");
    this.gl = gl;
    const program = gl.createProgram()!;
    for (const [kind, src] of [
      [gl.VERTEX_SHADER, VERTEX_SRC],
      [gl.FRAGMENT_SHADER, FRAGMENT_SRC],
    ] as const) {
      const shader = gl.createShader(kind)!;
      gl.shaderSource(shader, src);
      gl.compileShader(shader);
      if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
        throw new Error(`shader compile failed: ${gl.getShaderInfoLog(shader)}`);
      }
      gl.attachShader(program, shader);
    }
    gl.linkProgram(program);
    if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
      throw new Error(`program link failed: ${gl.getProgramInfoLog(program)}`);
    }
    gl.useProgram(program);
    gl.bindVertexArray(gl.createVertexArray());
    this.uniforms = {
      right: gl.getUniformLocation(program, "uRight")!,
      up: gl.getUniformLocation(program, "uUp")!,
      forward: gl.getUniformLocation(program, "uForward")!,
      tan: gl.getUniformLocation(program, "uTan")!,
    };
    this.setPlaceholder("no panorama");
  }

  private bindTexture(source: TexImageSource): void {
    const gl = this.gl;
    const texture = gl.createTexture();
    gl.bindTexture(gl.TEXTURE_2D, texture);
    gl.texImage2D(gl.TEXTURE_2D, 0, gl.RGBA, gl.RGBA, gl.UNSIGNED_BYTE, source);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_S, gl.REPEAT); // azimuth seam
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_T, gl.CLAMP_TO_EDGE);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MIN_FILTER, gl.LINEAR);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MAG_FILTER, gl.LINEAR);
  }

  setImage(source: TexImageSource): void {
    this.bindTexture(source);
  }

  /** Checkerboard-and-grid stand-in when a seat's image is missing. */
  setPlaceholder(label: string): void {
    const canvas = document.createElement("canvas");
    canvas.width = 1024;
    canvas.height = 512;
    const ctx = canvas.getContext("2d")!;
    ctx.fillStyle = "#20242c";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    ctx.strokeStyle = "#3c4454";
    for (let x = 0; x <= canvas.width; x += 64) {
      ctx.beginPath();
      ctx.moveTo(x, 0);
      ctx.lineTo(x, canvas.height);
      ctx.stroke();
    }
    for (let y = 0; y <= canvas.height; y += 64) {
      ctx.beginPath();
      ctx.moveTo(0, y);
      ctx.lineTo(canvas.width, y);
      ctx.stroke();
    }
    ctx.fillStyle = "#9aa7bd";
    ctx.font = "28px sans-serif";
    ctx.textAlign = "center";
    ctx.fillText(label, canvas.width / 2, canvas.height / 2);
    this.bindTexture(canvas);
  }

  draw(yaw: number, pitch: number, fovYDeg: number): void {
    const gl = this.gl;
    const width = this.canvas.clientWidth || this.canvas.width;
    const height = this.canvas.clientHeight || this.canvas.height;
    if (this.canvas.width !== width || this.canvas.height !== height) {
      this.canvas.width = width;
      this.canvas.height = height;
    }
    gl.viewport(0, 0, width, height);
    const cam = cameraQuat(yaw, pitch);
    const right = quatRotate(cam, vec3(1, 0, 0));
    const up = quatRotate(cam, vec3(0, 1, 0));
    const forward = quatRotate(cam, vec3(0, 0, -1));
    const tanY = Math.tan(((fovYDeg / 2) * Math.PI) / 180);
    const tanX = tanY * (width / height);
    const set = (loc: WebGLUniformLocation, v: Vec3) => gl.uniform3f(loc, v.x, v.y, v.z);
    set(this.uniforms.right, right);
    set(this.uniforms.up, up);
    set(this.uniforms.forward, forward);
    gl.uniform2f(this.uniforms.tan, tanX, tanY);
    gl.drawArrays(gl.TRIANGLES, 0, 3);
  }
}
